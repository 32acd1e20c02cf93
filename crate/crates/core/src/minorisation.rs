//! Small-set (local Doeblin) constants: evolved one-cell Diracs under the
//! conservative semigroup, the interval construction for equal mitosis, and
//! the closed-form constants of the self-similar case.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{make_grid, Grid, GridMeasure, GridScheme};
use crate::error::{Error, Result};
use crate::flow::FlowMap;
use crate::model::{Coefficients, Family, FragmentKernel};
use crate::semigroup::{max_stable_dt, EvolutionConfig, Evolver};

/// Shape of the reference measure `ν` on the common interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NuShape {
    /// Uniform in `x`.
    Uniform,
    /// Density proportional to `y`, as in the self-similar closed form.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmallSetMode {
    Simulated,
    ClosedFormSelfSimilar,
}

/// Conservative-semigroup inputs shared by the minorisation routines.
pub struct MinorisationSetup<'a> {
    pub grid: &'a Arc<Grid>,
    pub coeffs: &'a Coefficients,
    pub kernel: FragmentKernel,
    pub lambda: f64,
    /// `φ` at the grid nodes.
    pub phi: &'a [f64],
    /// Time step cap; the stable step is used when absent.
    pub dt: Option<f64>,
}

impl MinorisationSetup<'_> {
    /// An evolver whose step divides `t` exactly, and the step count.
    fn evolver_for(&self, t: f64) -> Result<(Evolver, usize)> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("evolution time must be positive, got {t}")));
        }
        let cap = max_stable_dt(self.grid, self.coeffs, self.kernel, self.lambda, Some(self.phi))?;
        let cap = self.dt.map_or(cap, |d| d.min(cap));
        let steps = (t / cap).ceil().max(1.0) as usize;
        let cfg = EvolutionConfig::conservative(t / steps as f64, self.lambda, self.phi.to_vec());
        Ok((Evolver::new(self.grid, self.coeffs, self.kernel, cfg)?, steps))
    }
}

/// Log-uniform grid on which `g = g0 x` moves mass by exactly one cell per
/// step, with `t` a whole number of steps (at least `min_steps`) and the step
/// stable for the fragmentation rate. Returns the grid and the step.
#[allow(clippy::too_many_arguments)]
pub fn exact_shift_grid(
    coeffs: &Coefficients,
    kernel: FragmentKernel,
    lambda: f64,
    phi: &dyn Fn(f64) -> f64,
    x_min: f64,
    x_max: f64,
    t: f64,
    min_steps: usize,
) -> Result<(Arc<Grid>, f64)> {
    let g0 = match coeffs.family() {
        Family::PowerLaw { a, g0, .. } if *a == 1.0 && *g0 > 0.0 => *g0,
        _ => return Err(Error::Config("exact shifts need g(x) = g0 x".into())),
    };
    if !(0.0 < x_min && x_min < x_max && t > 0.0) {
        return Err(Error::Domain("need 0 < x_min < x_max and t > 0".into()));
    }
    let mut steps = min_steps.max(1);
    for _ in 0..64 {
        let h = g0 * t / steps as f64;
        let n = ((x_max / x_min).ln() / h).ceil() as usize;
        let grid = make_grid(x_min, x_min * (n as f64 * h).exp(), GridScheme::LogUniform(n))?;
        let phi_grid: Vec<f64> = grid.nodes().iter().map(|&x| phi(x)).collect();
        let cap = max_stable_dt(&grid, coeffs, kernel, lambda, Some(&phi_grid))?;
        let dt = t / steps as f64;
        if dt <= cap * (1.0 + 1e-12) {
            return Ok((grid, dt));
        }
        steps = ((t / cap).ceil() as usize).max(steps + 1);
    }
    Err(Error::Config("no stable exact-shift grid found".into()))
}

/// Largest `Σ_{i∈I} w_i · min_{i∈I} h_i` over contiguous index ranges `I`.
/// Returns `(lo, hi, min height, area)`.
fn largest_rectangle(h: &[f64], w: &[f64]) -> Option<(usize, usize, f64, f64)> {
    let n = h.len();
    if n == 0 {
        return None;
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + w[i];
    }
    let mut stack: Vec<usize> = Vec::new();
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for i in 0..=n {
        let cur = if i < n { h[i] } else { -1.0 };
        while let Some(&top) = stack.last() {
            if h[top] <= cur {
                break;
            }
            stack.pop();
            let lo = stack.last().map_or(0, |&s| s + 1);
            let area = h[top] * (prefix[i] - prefix[lo]);
            if h[top] > 0.0 && best.is_none_or(|b| area > b.3) {
                best = Some((lo, i - 1, h[top], area));
            }
        }
        stack.push(i.min(n - 1));
        if i == n {
            break;
        }
    }
    best
}

fn shape_weights(grid: &Grid, shape: NuShape) -> Vec<f64> {
    let e = grid.edges();
    e.windows(2)
        .map(|c| match shape {
            NuShape::Uniform => c[1] - c[0],
            NuShape::Linear => 0.5 * (c[1] * c[1] - c[0] * c[0]),
        })
        .collect()
}

/// Interval and density floor of one evolved Dirac.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiracBound {
    pub x0: f64,
    pub t: f64,
    pub interval: (f64, f64),
    /// Smallest density of `F_t δ_{x0}` on the interval.
    pub floor: f64,
    /// For equal mitosis, the interval of the characteristic construction.
    pub proof_interval: Option<(f64, f64)>,
}

/// Evolves the one-cell Dirac at `x0` for time `t`.
pub fn evolve_dirac(setup: &MinorisationSetup<'_>, x0: f64, t: f64) -> Result<GridMeasure> {
    let (ev, steps) = setup.evolver_for(t)?;
    Ok(ev.advance(&GridMeasure::dirac(setup.grid, x0)?, steps))
}

/// First probe `10^{j/100}` with `B(x) ≥ g(x)/x`, and the time the flow
/// needs to carry `eta` there.
pub fn dominance_time(coeffs: &Coefficients, eta: f64) -> Result<(f64, f64)> {
    let x_b = (-600..=600)
        .map(|j| 10f64.powf(j as f64 / 100.0))
        .find(|&x| coeffs.rate(x) >= coeffs.growth(x) / x)
        .ok_or_else(|| Error::EmptyInterval("B never dominates g(x)/x on the probes".into()))?;
    if eta >= x_b {
        return Ok((x_b, 0.0));
    }
    let flow = FlowMap::new(coeffs)?;
    let mut hi = 1.0;
    while flow.flow(hi, eta)? < x_b {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::EmptyInterval(format!("the flow never carries {eta} to {x_b}")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if flow.flow(mid, eta)? >= x_b {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok((x_b, hi))
}

/// `[½ X_t(θ), X_{t−t_B}(½ X_{t_B}(0))]` for equal mitosis; errors when the
/// interval is empty.
pub fn mitosis_proof_interval(coeffs: &Coefficients, eta: f64, theta: f64, t: f64) -> Result<(f64, f64)> {
    let (_, t_b) = dominance_time(coeffs, eta)?;
    if !(t > t_b) {
        return Err(Error::EmptyInterval(format!("t = {t} does not exceed t_B = {t_b}")));
    }
    let flow = FlowMap::new(coeffs)?;
    let lo = 0.5 * flow.flow(t, theta)?;
    let hi = flow.flow(t - t_b, 0.5 * flow.flow(t_b, 0.0)?)?;
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(Error::EmptyInterval(format!("proof interval [{lo:.6e}, {hi:.6e}] is empty at t = {t}")))
    }
}

/// `ω X_t(x) < X_t(ω x)` at `ω = 1/2` for every probe.
pub fn mitosis_sublinearity(coeffs: &Coefficients, probes: &[f64], t: f64) -> Result<bool> {
    let flow = FlowMap::new(coeffs)?;
    for &x in probes {
        if !(0.5 * flow.flow(t, x)? < flow.flow(t, 0.5 * x)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Evolves the Dirac at `x0` and returns the interval maximising
/// `|I| · min_I density` with that minimum as the floor.
pub fn dirac_lower_bound(setup: &MinorisationSetup<'_>, x0: f64, t: f64) -> Result<DiracBound> {
    let proof_interval = match setup.kernel {
        FragmentKernel::EqualMitosis => Some(mitosis_proof_interval(setup.coeffs, x0, x0, t)?),
        FragmentKernel::Uniform => None,
    };
    let f = evolve_dirac(setup, x0, t)?;
    let w = setup.grid.widths();
    let dens: Vec<f64> = f.mass.iter().zip(&w).map(|(m, w)| m / w).collect();
    let (lo, hi, floor, _) =
        largest_rectangle(&dens, &w).ok_or_else(|| Error::EmptyInterval(format!("F_t δ_{x0} vanishes on the grid")))?;
    let e = setup.grid.edges();
    Ok(DiracBound { x0, t, interval: (e[lo], e[hi + 1]), floor, proof_interval })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmallSetCertificate {
    pub t0: f64,
    pub r: f64,
    /// Hull of `{x : V(x) ≤ R}` on the grid nodes.
    pub c_set: (f64, f64),
    pub interval: (f64, f64),
    /// Probability measure `ν` on the grid.
    pub nu: Vec<f64>,
    pub nu_shape: NuShape,
    pub log_alpha: f64,
    pub mode: SmallSetMode,
    pub probes: Vec<f64>,
    pub cells: usize,
    pub dt: f64,
}

impl SmallSetCertificate {
    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

/// `probes` log-spaced points of `[a, b]`, both ends included.
pub fn log_probes(a: f64, b: f64, probes: usize) -> Vec<f64> {
    if probes <= 1 || a >= b {
        return vec![a];
    }
    let r = (b / a).ln();
    (0..probes).map(|i| if i + 1 == probes { b } else { a * (r * i as f64 / (probes - 1) as f64).exp() }).collect()
}

/// Small set `{V ≤ R}` of the drift weight `v` (at the grid nodes), probed by
/// evolved Diracs; `ν` is normalised on the best common interval.
pub fn small_set_constants(
    setup: &MinorisationSetup<'_>,
    v: &[f64],
    r: f64,
    t0: f64,
    probes: usize,
    shape: NuShape,
) -> Result<SmallSetCertificate> {
    let grid = setup.grid;
    let nodes = grid.nodes();
    if v.len() != grid.len() {
        return Err(Error::Config("weight must be sampled at every grid node".into()));
    }
    let inside: Vec<usize> = (0..grid.len()).filter(|&i| v[i] <= r).collect();
    let (&first, &last) = match (inside.first(), inside.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::EmptyInterval(format!("no grid node has V <= R = {r}"))),
    };
    if last + 1 == grid.len() {
        return Err(Error::InvalidGrid(format!(
            "the small set V <= {r} reaches x_max = {}; extend the grid",
            grid.x_max()
        )));
    }
    let (eta, theta) = (nodes[first], nodes[last]);
    let xs = log_probes(eta, theta, probes.max(1));
    if setup.kernel == FragmentKernel::EqualMitosis {
        mitosis_proof_interval(setup.coeffs, eta, theta, t0)?;
    }
    let (ev, steps) = setup.evolver_for(t0)?;
    let evolved: Vec<GridMeasure> =
        xs.par_iter().map(|&x0| Ok(ev.advance(&GridMeasure::dirac(grid, x0)?, steps))).collect::<Result<_>>()?;
    let sw = shape_weights(grid, shape);
    let heights: Vec<f64> =
        (0..grid.len()).map(|i| evolved.iter().map(|f| f.mass[i]).fold(f64::INFINITY, f64::min) / sw[i]).collect();
    let (lo, hi, _, _) = largest_rectangle(&heights, &sw).ok_or_else(|| {
        Error::EmptyInterval(format!("the evolved Diracs from [{eta:.4e}, {theta:.4e}] share no cell at t = {t0}"))
    })?;
    let norm: f64 = sw[lo..=hi].iter().sum();
    let mut nu = vec![0.0; grid.len()];
    for i in lo..=hi {
        nu[i] = sw[i] / norm;
    }
    // α is the worst cellwise ratio, which is what a replay checks.
    let nu_ref = &nu;
    let alpha =
        evolved.iter().flat_map(|f| (lo..=hi).map(move |i| f.mass[i] / nu_ref[i])).fold(f64::INFINITY, f64::min);
    if !(alpha > 0.0) {
        return Err(Error::EmptyInterval(format!("alpha = {alpha} is not positive")));
    }
    let alpha = alpha.min(1.0 - 1e-12);
    let e = grid.edges();
    Ok(SmallSetCertificate {
        t0,
        r,
        c_set: (eta, theta),
        interval: (e[lo], e[hi + 1]),
        nu,
        nu_shape: shape,
        log_alpha: alpha.ln(),
        mode: SmallSetMode::Simulated,
        probes: xs,
        cells: grid.len(),
        dt: ev.config().dt,
    })
}

/// Re-evolves each probe and counts cells with `F_{t0} δ < α ν`.
pub fn replay(setup: &MinorisationSetup<'_>, cert: &SmallSetCertificate) -> Result<usize> {
    let (ev, steps) = setup.evolver_for(cert.t0)?;
    let alpha = cert.alpha();
    cert.probes
        .par_iter()
        .map(|&x0| {
            let f = ev.advance(&GridMeasure::dirac(setup.grid, x0)?, steps);
            Ok(f.mass.iter().zip(&cert.nu).filter(|(m, n)| **m < alpha * **n * (1.0 - 1e-12)).count())
        })
        .sum::<Result<usize>>()
}

/// Closed-form small-set constants for `g = x`, `B = x^b`, uniform kernel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfSimilarSmallSet {
    pub b: f64,
    pub t0: f64,
    pub r: f64,
    /// `log α` with `α = R^{b+3} t₀ exp(−2 (R e^{t₀})^b / b)`.
    pub log_alpha: f64,
    /// The same with the exponent `R^γ`, `γ = e^{−t₀/2}`, read literally.
    pub log_alpha_literal: f64,
    /// `ν(dy) = (2e^{−2t₀}/R) y dy` on `[0, R e^{t₀}]`.
    pub nu_support: (f64, f64),
    /// Total mass of that `ν`.
    pub nu_mass: f64,
    pub c_set: (f64, f64),
}

pub fn selfsim_small_set(b: f64, t0: f64, r: f64) -> Result<SelfSimilarSmallSet> {
    if !(b > 0.0 && t0 > 0.0 && r > 1.0) {
        return Err(Error::Domain(format!("need b > 0, t0 > 0, R > 1; got {b}, {t0}, {r}")));
    }
    let gamma = (-t0 / 2.0).exp();
    let base = (b + 3.0) * r.ln() + t0.ln();
    let top = r * t0.exp();
    let nu_mass = 2.0 * (-2.0 * t0).exp() / r * top * top / 2.0;
    Ok(SelfSimilarSmallSet {
        b,
        t0,
        r,
        log_alpha: base - 2.0 * top.powf(b) / b,
        log_alpha_literal: base - 2.0 * r.powf(gamma) * (b * t0).exp() / b,
        nu_support: (0.0, top),
        nu_mass,
        c_set: (1.0 / r, r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_picks_best_area() {
        let (lo, hi, h, a) = largest_rectangle(&[1.0, 3.0, 3.0, 0.0, 5.0], &[1.0; 5]).unwrap();
        assert_eq!((lo, hi, h, a), (1, 2, 3.0, 6.0));
        let (lo, hi, _, a) = largest_rectangle(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((lo, hi, a), (0, 2, 12.0));
        assert!(largest_rectangle(&[0.0, 0.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn linear_mitosis_interval_always_empty() {
        let c = Coefficients::power_law(1.0, 1.0, 1.0, 1.0).unwrap();
        for t in [1.0, 2.0, 5.0, 10.0, 40.0] {
            assert!(matches!(mitosis_proof_interval(&c, 0.5, 2.0, t), Err(Error::EmptyInterval(_))));
        }
    }

    #[test]
    fn square_root_mitosis_interval_opens() {
        let c = Coefficients::power_law(0.5, 1.0, 1.0, 1.0).unwrap();
        let (lo, hi) = mitosis_proof_interval(&c, 1.0, 1.0, 20.0).unwrap();
        assert!(lo < hi);
        assert!(mitosis_sublinearity(&c, &[0.1, 1.0, 10.0], 1.0).unwrap());
    }

    #[test]
    fn closed_form_nu_mass_is_r() {
        let s = selfsim_small_set(2.0, 2.0 * 2f64.ln(), 10.0).unwrap();
        assert!((s.nu_mass - 10.0).abs() < 1e-12);
        assert_eq!(s.c_set, (0.1, 10.0));
    }
}
