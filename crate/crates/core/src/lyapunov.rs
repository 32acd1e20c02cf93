//! Foster–Lyapunov drift constants for the three growth regimes and an
//! empirical check of the integrated drift inequality on the conservative
//! semigroup.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{Grid, GridMeasure};
use crate::error::{Error, Result};
use crate::model::{Coefficients, FragmentKernel, FragmentLaw, GrowthClass};
use crate::provenance::Provenance;
use crate::semigroup::{max_stable_dt, EvolutionConfig, Evolver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `g(x) = x` with the uniform kernel; `V = x^{k−1} + x^{K−1}` on `f = x m`.
    LinearGrowth,
    /// `∫₀¹ 1/g < ∞`; `V = 1 + x^K/φ`.
    SublinearAt0,
    /// `∫₀¹ 1/g = ∞`; `V = (x^k + x^K)/φ`.
    SuperlinearAt0,
}

impl Regime {
    pub fn for_model(coeffs: &Coefficients) -> Regime {
        match coeffs.growth_class() {
            GrowthClass::ExactlyLinear => Regime::LinearGrowth,
            GrowthClass::SublinearAt0 => Regime::SublinearAt0,
            GrowthClass::SuperlinearAt0 => Regime::SuperlinearAt0,
        }
    }

    fn accepts(self, class: GrowthClass) -> bool {
        matches!(
            (self, class),
            (Regime::LinearGrowth, GrowthClass::ExactlyLinear)
                | (Regime::SublinearAt0, GrowthClass::SublinearAt0)
                | (Regime::SuperlinearAt0, GrowthClass::SuperlinearAt0)
                | (Regime::SuperlinearAt0, GrowthClass::ExactlyLinear)
        )
    }

    fn needs_phi(self) -> bool {
        self != Regime::LinearGrowth
    }
}

/// `(c₁, c₂, c₃, c₄)` of the linear-growth drift function.
pub fn linear_coefficients(k: f64, big_k: f64) -> Result<[f64; 4]> {
    if !(-1.0 < k && k < 1.0 && 1.0 < big_k) {
        return Err(Error::Constraint(format!("need -1 < k < 1 < K, got k = {k}, K = {big_k}")));
    }
    Ok([(1.0 - big_k) / (1.0 + big_k), big_k - (k + 1.0) / 2.0, (1.0 - k) / (1.0 + k), (k - 1.0) / 2.0])
}

/// `Φ(x) = c₁B x^{K−1} + c₂x^{K−1} + c₃B x^{k−1} + c₄x^{k−1}` with `b = B(x)`.
pub fn phi_linear(x: f64, k: f64, big_k: f64, b: f64) -> Result<f64> {
    let [c1, c2, c3, c4] = linear_coefficients(k, big_k)?;
    let xk = x.powf(big_k - 1.0);
    let xs = x.powf(k - 1.0);
    Ok(c1 * b * xk + c2 * xk + c3 * b * xs + c4 * xs)
}

/// Drift function of the regime before division by `φ`.
pub fn drift_function(
    regime: Regime,
    k: f64,
    big_k: f64,
    coeffs: &Coefficients,
    kernel: FragmentKernel,
    x: f64,
) -> Result<f64> {
    let g = coeffs.growth(x);
    let b = coeffs.rate(x);
    match regime {
        Regime::LinearGrowth => phi_linear(x, k, big_k, b),
        Regime::SublinearAt0 => {
            let pk = kernel.moment(big_k)?;
            Ok((pk - 1.0) * x.powf(big_k) * b + big_k * x.powf(big_k - 1.0) * g)
        }
        Regime::SuperlinearAt0 => {
            let ps = kernel.moment(k)?;
            let pk = kernel.moment(big_k)?;
            Ok((ps - 1.0) * x.powf(k) * b
                + (pk - 1.0) * x.powf(big_k) * b
                + k * x.powf(k - 1.0) * g
                + big_k * x.powf(big_k - 1.0) * g)
        }
    }
}

#[derive(Clone, Debug)]
pub struct DriftOptions {
    pub probes: usize,
    pub lo: f64,
    pub hi: f64,
    pub safety: f64,
}

impl Default for DriftOptions {
    fn default() -> Self {
        Self { probes: 10_000, lo: 1e-6, hi: 1e6, safety: 1.05 }
    }
}

/// `λ` and `φ` for the regimes whose bound is `sup Φ/φ`.
pub struct DualInput<'a> {
    pub lambda: f64,
    pub phi: &'a (dyn Fn(f64) -> f64 + Sync),
    pub source: Provenance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftCertificate {
    pub regime: Regime,
    /// Small exponent; unused in the sublinear regime.
    pub k: f64,
    pub big_k: f64,
    pub c1: f64,
    pub c2: f64,
    /// Additive drift constant.
    pub k_d: f64,
    /// Probe supremum of `Φ` (linear) or `Φ/φ` before the safety factor.
    pub raw_sup: f64,
    pub argmax: f64,
    pub probes: usize,
    /// Where `φ` came from, for the regimes that use it.
    pub phi_source: Option<Provenance>,
}

impl DriftCertificate {
    /// `γ = e^{−C₁ t₀}`.
    pub fn gamma(&self, t0: f64) -> f64 {
        (-self.c1 * t0).exp()
    }

    /// Drift weight on `f = φ m` at `x`, given `φ(x)`.
    pub fn weight(&self, x: f64, phi_x: f64) -> f64 {
        match self.regime {
            Regime::LinearGrowth => x.powf(self.k - 1.0) + x.powf(self.big_k - 1.0),
            Regime::SublinearAt0 => 1.0 + x.powf(self.big_k) / phi_x,
            Regime::SuperlinearAt0 => (x.powf(self.k) + x.powf(self.big_k)) / phi_x,
        }
    }

    pub fn weight_on_grid(&self, grid: &Grid, phi: &[f64]) -> Vec<f64> {
        grid.nodes().iter().zip(phi).map(|(&x, &p)| self.weight(x, p)).collect()
    }
}

fn check_exponents(regime: Regime, k: f64, big_k: f64, xi: f64) -> Result<()> {
    let ok = match regime {
        Regime::LinearGrowth => -1.0 < k && k < 1.0 && 1.0 < big_k,
        Regime::SublinearAt0 => big_k > 1.0 + xi,
        Regime::SuperlinearAt0 => -1.0 < k && k < 0.0 && big_k > 1.0 + xi,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Constraint(format!(
            "weight exponents k = {k}, K = {big_k} are not admissible for {regime:?} (xi = {xi})"
        )))
    }
}

/// Drift constants by a probe supremum of the regime's `Φ` (or `Φ/φ`).
pub fn drift_constants(
    regime: Regime,
    k: f64,
    big_k: f64,
    coeffs: &Coefficients,
    kernel: FragmentKernel,
    dual: Option<DualInput<'_>>,
    opts: &DriftOptions,
) -> Result<DriftCertificate> {
    let class = coeffs.growth_class();
    if !regime.accepts(class) {
        return Err(Error::Config(format!("{regime:?} does not match growth class {class:?}")));
    }
    if regime == Regime::LinearGrowth && kernel != FragmentKernel::Uniform {
        return Err(Error::Config("the linear-growth drift applies to the uniform kernel only".into()));
    }
    check_exponents(regime, k, big_k, coeffs.xi())?;
    if opts.probes < 20 || !(0.0 < opts.lo && opts.lo < opts.hi) {
        return Err(Error::Domain("need at least 20 probes on a valid window".into()));
    }
    let dual = match (regime.needs_phi(), dual) {
        (true, None) => return Err(Error::MissingPhi),
        (_, d) => d,
    };
    let c1 = match (&dual, regime) {
        (_, Regime::LinearGrowth) => (1.0 - k) / 2.0,
        (Some(d), _) => d.lambda,
        (None, _) => unreachable!(),
    };
    if !(c1 > 0.0) {
        return Err(Error::Constraint(format!("C1 = {c1} must be positive")));
    }
    let ratio = (opts.hi / opts.lo).ln();
    let xs: Vec<f64> =
        (0..opts.probes).map(|i| opts.lo * (ratio * i as f64 / (opts.probes - 1) as f64).exp()).collect();
    let vals = xs
        .iter()
        .map(|&x| {
            let v = drift_function(regime, k, big_k, coeffs, kernel, x)?;
            Ok(match (&dual, regime) {
                (Some(d), r) if r != Regime::LinearGrowth => v / (d.phi)(x),
                _ => v,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let (imax, &sup) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("probes are nonempty");
    if !sup.is_finite() {
        return Err(Error::DriftUnbounded(format!("non-finite value at x = {:e}", xs[imax])));
    }
    // The supremum must be attained away from the outer decades, and where
    // the drift function tends to −∞ it must be negative and still falling
    // on those decades.
    let low_end = xs.iter().position(|&x| x > opts.lo * 10.0).unwrap_or(0);
    let high_end = xs.iter().rposition(|&x| x < opts.hi / 10.0).unwrap_or(xs.len() - 1);
    if imax < low_end || imax > high_end {
        return Err(Error::DriftUnbounded(format!(
            "supremum {sup:e} attained at the probe boundary x = {:e}",
            xs[imax]
        )));
    }
    let falls = |range: &[f64], outer: f64, inner: f64| range.iter().all(|&v| v < 0.0) && outer < inner;
    if !falls(&vals[high_end..], vals[vals.len() - 1], vals[high_end]) {
        return Err(Error::DriftUnbounded("drift function does not tend to -inf at large x".into()));
    }
    if regime != Regime::SublinearAt0 && !falls(&vals[..=low_end], vals[0], vals[low_end]) {
        return Err(Error::DriftUnbounded("drift function does not tend to -inf at small x".into()));
    }
    if !(sup > 0.0) {
        return Err(Error::Constraint(format!("drift supremum {sup:e} is not positive")));
    }
    let c2 = opts.safety * sup;
    let k_d = match regime {
        Regime::LinearGrowth => c2 / c1,
        _ => 1.0 + c2 / c1,
    };
    Ok(DriftCertificate {
        regime,
        k: if regime == Regime::SublinearAt0 { 0.0 } else { k },
        big_k,
        c1,
        c2,
        k_d,
        raw_sup: sup,
        argmax: xs[imax],
        probes: opts.probes,
        phi_source: dual.map(|d| d.source),
    })
}

/// Closed-form additive constant `10 (15/2)^{1/b + b/2}` for
/// `g = x`, `B = x^b`, `k = 0`, `K = 2`.
pub fn selfsim_drift_constant(b: f64) -> f64 {
    10.0 * 7.5f64.powf(1.0 / b + b / 2.0)
}

/// Evolution inputs for [`verify_drift`].
pub struct DriftCheckSetup<'a> {
    pub grid: &'a Arc<Grid>,
    pub coeffs: &'a Coefficients,
    pub kernel: FragmentKernel,
    pub lambda: f64,
    /// `φ` at the grid nodes.
    pub phi: &'a [f64],
    /// Time step cap; the stable step is used when absent.
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftViolation {
    pub initial: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftReport {
    pub t0: f64,
    pub gamma: f64,
    pub k_d: f64,
    pub trials: usize,
    pub dt: f64,
    /// Largest `LHS / RHS` observed.
    pub worst_ratio: f64,
    pub violations: Vec<DriftViolation>,
}

impl DriftReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Random normalised initial state number `i`; the first two are one-cell
/// masses at the two ends of the grid.
fn drift_initial(grid: &Arc<Grid>, i: usize, seed: u64) -> (String, GridMeasure) {
    let n = grid.len();
    match i {
        0 => ("dirac at x_min".into(), GridMeasure::dirac(grid, grid.nodes()[0]).unwrap()),
        1 => ("dirac at x_max".into(), GridMeasure::dirac(grid, grid.nodes()[n - 1]).unwrap()),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            if rng.random_bool(0.2) {
                let c = rng.random_range(0..n);
                let x = grid.nodes()[c];
                return (format!("dirac at {x:.4e}"), GridMeasure::dirac(grid, x).unwrap());
            }
            let (lo, hi) = (grid.x_min().ln(), grid.x_max().ln());
            let bumps = rng.random_range(1..=3);
            let params: Vec<(f64, f64, f64)> = (0..bumps)
                .map(|_| (rng.random_range(lo..hi), rng.random_range(0.05..1.0), rng.random_range(0.1..1.0)))
                .collect();
            let mut m = GridMeasure::from_density(grid, |x| {
                params.iter().map(|&(c, w, a)| a * (-((x.ln() - c) / w).powi(2)).exp() / x).sum()
            });
            let total = m.total();
            if !(total > 0.0) {
                m = GridMeasure::dirac(grid, grid.nodes()[n / 2]).unwrap();
            } else {
                m = m.scaled(1.0 / total);
            }
            (format!("{bumps} log-normal bumps (trial {i})"), m)
        }
    }
}

/// Checks `∫V f(t₀) ≤ γ ∫V f₀ + K_d ∫f₀` with 1% slack on random initial
/// states evolved by the conservative semigroup.
pub fn verify_drift(
    cert: &DriftCertificate,
    setup: &DriftCheckSetup<'_>,
    t0: f64,
    trials: usize,
    seed: u64,
) -> Result<DriftReport> {
    if !(t0 > 0.0) {
        return Err(Error::Domain(format!("t0 must be positive, got {t0}")));
    }
    let grid = setup.grid;
    let cap = max_stable_dt(grid, setup.coeffs, setup.kernel, setup.lambda, Some(setup.phi))?;
    let cap = setup.dt.map_or(cap, |d| d.min(cap));
    let steps = (t0 / cap).ceil().max(1.0) as usize;
    let dt = t0 / steps as f64;
    let ev = Evolver::new(
        grid,
        setup.coeffs,
        setup.kernel,
        EvolutionConfig::conservative(dt, setup.lambda, setup.phi.to_vec()),
    )?;
    let gamma = cert.gamma(t0);
    let v = cert.weight_on_grid(grid, setup.phi);
    let results: Vec<(String, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let (label, f0) = drift_initial(grid, i, seed);
            let f1 = ev.advance(&f0, steps);
            let lhs = f1.integrate(&v);
            let rhs = gamma * f0.integrate(&v) + cert.k_d * f0.total();
            (label, lhs, rhs)
        })
        .collect();
    let worst_ratio = results.iter().map(|r| r.1 / r.2).fold(0.0, f64::max);
    let violations = results
        .into_iter()
        .filter(|(_, lhs, rhs)| *lhs > 1.01 * rhs)
        .map(|(initial, lhs, rhs)| DriftViolation { initial, lhs, rhs })
        .collect();
    Ok(DriftReport { t0, gamma, k_d: cert.k_d, trials, dt, worst_ratio, violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_for_zero_two() {
        let c = linear_coefficients(0.0, 2.0).unwrap();
        let want = [-1.0 / 3.0, 1.5, 1.0, -0.5];
        for (a, b) in c.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(linear_coefficients(1.0, 2.0).is_err());
    }

    #[test]
    fn no_fragmentation_root() {
        let r = 1.0 / 3f64.sqrt();
        assert!(phi_linear(r, 0.0, 2.0, 0.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn linear_regime_constants() {
        let c = Coefficients::power_law(1.0, 1.0, 2.0, 1.0).unwrap();
        let cert = drift_constants(
            Regime::LinearGrowth,
            0.0,
            2.0,
            &c,
            FragmentKernel::Uniform,
            None,
            &DriftOptions::default(),
        )
        .unwrap();
        assert_eq!(cert.c1, 0.5);
        assert!(cert.raw_sup <= 5.0 * 7.5f64.powf(1.5));
        assert!((cert.k_d - cert.c2 / cert.c1).abs() < 1e-12);
    }

    #[test]
    fn regime_mismatch_rejected() {
        let c = Coefficients::power_law(0.0, 1.0, 2.0, 1.0).unwrap();
        let r = drift_constants(
            Regime::LinearGrowth,
            0.0,
            2.0,
            &c,
            FragmentKernel::Uniform,
            None,
            &DriftOptions::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
        let r = drift_constants(
            Regime::SublinearAt0,
            0.0,
            2.0,
            &c,
            FragmentKernel::Uniform,
            None,
            &DriftOptions::default(),
        );
        assert_eq!(r.unwrap_err(), Error::MissingPhi);
    }
}
