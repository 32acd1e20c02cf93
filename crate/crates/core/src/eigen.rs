//! Perron eigenelements: the truncated dual problem, its limit in the
//! truncation radius, the direct eigenvector from the conservative
//! semigroup, and the closed-form cases.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::discretization::{weighted_tv_norm_values, Grid, GridMeasure};
use crate::error::{Error, Result};
use crate::model::{Coefficients, FragmentKernel, FragmentLaw, GrowthClass};
use crate::semigroup::{EvolutionConfig, Evolver};

/// Perron triple on an evolution grid, normalised so that `∫N = ∫φN = 1`.
#[derive(Clone, Debug)]
pub struct EigenTriple {
    pub lambda: f64,
    pub n: GridMeasure,
    /// `φ` at the grid nodes.
    pub phi: Vec<f64>,
    pub a_norm: f64,
}

impl EigenTriple {
    fn normalise(mut self) -> Self {
        let total = self.n.total();
        self.n = self.n.scaled(1.0 / total);
        let pairing = self.n.integrate(&self.phi);
        self.phi.iter_mut().for_each(|p| *p /= pairing);
        self
    }
}

/// One solve of the dual problem on `(0, R)` with `φ_R(R) = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruncatedDualSolution {
    pub r: f64,
    pub lambda_r: f64,
    /// Dual grid points; the last one is `R`.
    pub nodes: Vec<f64>,
    /// `φ_R` at `nodes`, with `sup_{[0, A]} φ_R = 1` and `φ_R(R) = 0`.
    pub phi_r: Vec<f64>,
    pub a_norm: f64,
    /// `‖Mφ − λPφ‖∞ / ‖Mφ‖∞` of the discrete problem.
    pub residual: f64,
    pub unknowns: usize,
    /// Shift used to grade the dual grid.
    pub grid_shift: f64,
}

#[derive(Clone, Debug)]
pub struct DualOptions {
    /// Exponent of the upper bound `φ ≤ C(1 + x^k)`; must exceed 1.
    pub k: f64,
    /// Left end of the dual grid.
    pub x_min: f64,
    /// Points per octave of the dual grid; refined further where the
    /// discrete operator would lose monotonicity.
    pub q: usize,
    /// First truncation radius; defaults to `4A(k)`.
    pub r0: Option<f64>,
    pub r_max: f64,
    /// Upper bound on the dual unknowns per solve.
    pub max_unknowns: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self { k: 2.0, x_min: 1e-4, q: 24, r0: None, r_max: 512.0, max_unknowns: 2400 }
    }
}

/// The `ϱ` of the upper bound: `x^{k−1}(−k g − B x^{1−k} + (1 − p_k) B x)`.
pub fn crossover_rho(coeffs: &Coefficients, kernel: FragmentKernel, k: f64, x: f64) -> Result<f64> {
    let pk = kernel.moment(k)?;
    let (g, b) = (coeffs.growth(x), coeffs.rate(x));
    Ok(x.powf(k - 1.0) * (-k * g - b * x.powf(1.0 - k) + (1.0 - pk) * b * x))
}

/// Smallest `A` beyond which `ϱ > 0` on every probe up to `1e6`.
pub fn crossover_a(coeffs: &Coefficients, kernel: FragmentKernel, k: f64) -> Result<f64> {
    if k <= 1.0 {
        return Err(Error::Domain(format!("crossover needs k > 1, got {k}")));
    }
    let probes: Vec<f64> = (0..=1200).map(|i| 10f64.powf(-6.0 + i as f64 * 0.01)).collect();
    let rho = |x: f64| crossover_rho(coeffs, kernel, k, x);
    let mut last_bad = None;
    for (i, &x) in probes.iter().enumerate() {
        if rho(x)? <= 0.0 {
            last_bad = Some(i);
        }
    }
    match last_bad {
        None => Ok(probes[0]),
        Some(i) if i + 1 >= probes.len() => {
            Err(Error::CrossoverNotFound(format!("rho is not positive at x = {:.3e}", probes[i])))
        }
        Some(i) => {
            let (mut lo, mut hi) = (probes[i], probes[i + 1]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if rho(mid)? > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(hi)
        }
    }
}

/// Exponent of `φ` near 0: 0 when `1/g` is integrable there, 1 otherwise.
fn small_exponent(coeffs: &Coefficients) -> f64 {
    match coeffs.growth_class() {
        GrowthClass::SublinearAt0 => 0.0,
        _ => 1.0,
    }
}

/// Dual grid on `[x_min, r]`: geometric with `q` points per octave, refined
/// where needed so that `Δ (B + μ) / (2 g) ≤ 0.9`.
fn dual_points(coeffs: &Coefficients, x_min: f64, r: f64, q: usize, mu: f64) -> Vec<f64> {
    let ratio = 2f64.powf(1.0 / q as f64) - 1.0;
    let cap = |x: f64| 1.8 * coeffs.growth(x) / (coeffs.rate(x) + mu.max(0.0)).max(1e-300);
    let mut z = vec![x_min];
    let mut x = x_min;
    while x < r {
        let mut h = (x * ratio).min(cap(x));
        h = h.min(cap(x + h));
        if x + h >= r {
            z.push(r);
            break;
        }
        if r - (x + h) < 0.25 * h {
            z.push(0.5 * (x + r));
            z.push(r);
            break;
        }
        x += h;
        z.push(x);
    }
    z
}

/// Nonnegative interpolation weights of `φ(x)` on the dual points; below the
/// grid `φ` is extended by `(x/z_0)^s φ_0`.
fn interpolation_row(z: &[f64], x: f64, s: f64, out: &mut Vec<(usize, f64)>, scale: f64) {
    if x <= z[0] {
        out.push((0, scale * (x / z[0]).powf(s)));
        return;
    }
    let j = z.partition_point(|&v| v <= x) - 1;
    let t = (x - z[j]) / (z[j + 1] - z[j]);
    out.push((j, scale * (1.0 - t)));
    if t > 0.0 {
        out.push((j + 1, scale * t));
    }
}

/// Assembles `M φ = λ P φ` for the box scheme
/// `(φ_{i+1} − φ_i)/Δ_i = ½(F_i + F_{i+1})`, `F = ((B + λ)φ − I[φ])/g`.
fn assemble(coeffs: &Coefficients, kernel: FragmentKernel, z: &[f64], s: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = z.len() - 1;
    let g: Vec<f64> = z.iter().map(|&x| coeffs.growth(x)).collect();
    let b: Vec<f64> = z.iter().map(|&x| coeffs.rate(x)).collect();
    // Rows of the integral term I_k = Σ_j c_kj φ_j, for k = 0..=m; φ_m = 0.
    let integral_row = |k: usize, out: &mut Vec<(usize, f64)>| {
        out.clear();
        if b[k] == 0.0 {
            return;
        }
        match kernel {
            FragmentKernel::Uniform => {
                let c = 2.0 * b[k] / z[k];
                let mut w0 = z[0] / (1.0 + s);
                if k > 0 {
                    w0 += 0.5 * (z[1] - z[0]);
                }
                out.push((0, c * w0));
                for j in 1..k.min(m) {
                    out.push((j, c * 0.5 * (z[j + 1] - z[j - 1])));
                }
                if k >= 1 && k < m {
                    out.push((k, c * 0.5 * (z[k] - z[k - 1])));
                }
            }
            FragmentKernel::EqualMitosis => {
                interpolation_row(z, 0.5 * z[k], s, out, 2.0 * b[k]);
                out.retain(|&(j, _)| j < m);
            }
        }
    };
    let mut mm = DMatrix::<f64>::zeros(m, m);
    let mut pp = DMatrix::<f64>::zeros(m, m);
    let mut row = Vec::new();
    for i in 0..m {
        let d = z[i + 1] - z[i];
        mm[(i, i)] += -1.0 / d - 0.5 * b[i] / g[i];
        pp[(i, i)] += 0.5 / g[i];
        if i + 1 < m {
            mm[(i, i + 1)] += 1.0 / d - 0.5 * b[i + 1] / g[i + 1];
            pp[(i, i + 1)] += 0.5 / g[i + 1];
        }
        for kk in [i, i + 1] {
            integral_row(kk, &mut row);
            for &(j, c) in &row {
                mm[(i, j)] += 0.5 * c / g[kk];
            }
        }
    }
    (mm, pp)
}

/// Largest `Δ (B + μ) / (2 g)` over the dual intervals.
fn peclet(coeffs: &Coefficients, z: &[f64], mu: f64) -> f64 {
    z.windows(2)
        .map(|w| {
            let x = w[1];
            (w[1] - w[0]) * (coeffs.rate(x) + mu.max(0.0)) / (2.0 * coeffs.growth(x))
        })
        .fold(0.0, f64::max)
}

struct PerronPair {
    lambda: f64,
    phi: Vec<f64>,
}

/// Shifted inverse iteration with Collatz–Wielandt brackets.
fn perron_pair(mm: &DMatrix<f64>, pp: &DMatrix<f64>, mu_start: f64) -> Result<PerronPair> {
    let m = mm.nrows();
    let ones = DVector::from_element(m, 1.0);
    let solve = |mu: f64, rhs: &DVector<f64>| -> Option<DVector<f64>> {
        let a = pp * mu - mm;
        a.lu().solve(rhs)
    };
    let mut mu = mu_start;
    let mut v = None;
    for _ in 0..60 {
        if let Some(x) = solve(mu, &(pp * &ones)) {
            if x.iter().all(|&t| t > 0.0 && t.is_finite()) {
                v = Some(x);
                break;
            }
        }
        mu = 2.0 * mu.abs() + 1.0;
    }
    let mut v = v.ok_or_else(|| Error::NonConvergence("no shift with a positive inverse iterate was found".into()))?;
    v /= v.max();
    let mut restarts = 0;
    let mut lambda = f64::NAN;
    for _ in 0..400 {
        let a = pp * mu - mm;
        let lu = a.lu();
        let mut changed_shift = false;
        for _ in 0..50 {
            let w = lu.solve(&(pp * &v)).ok_or_else(|| Error::NonConvergence("singular shifted operator".into()))?;
            if w.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
                // Lost positivity: the shift fell below the Perron value.
                restarts += 1;
                if restarts > 20 {
                    return Err(Error::Positivity("inverse iterates keep changing sign".into()));
                }
                mu = 2.0 * mu.abs() + 1.0;
                v = ones.clone();
                changed_shift = true;
                break;
            }
            let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
            for (wi, vi) in w.iter().zip(v.iter()) {
                let r = wi / vi;
                rmin = rmin.min(r);
                rmax = rmax.max(r);
            }
            let lo = mu - 1.0 / rmin;
            let hi = mu - 1.0 / rmax;
            v = &w / w.max();
            lambda = 0.5 * (lo + hi);
            if hi - lo <= 1e-13 * lambda.abs().max(1e-8) {
                return Ok(PerronPair { lambda: hi, phi: v.iter().cloned().collect() });
            }
            let next = hi + 0.1 * hi.abs().max(1e-3);
            if next < mu - 1e-3 * (mu - hi) {
                mu = next;
                changed_shift = true;
                break;
            }
        }
        if !changed_shift {
            break;
        }
    }
    Err(Error::NonConvergence(format!("inverse iteration did not settle (last estimate {lambda})")))
}

/// Solves the dual problem truncated at `r`.
pub fn solve_truncated_dual(
    coeffs: &Coefficients,
    kernel: FragmentKernel,
    r: f64,
    opts: &DualOptions,
    lambda_guess: Option<f64>,
) -> Result<TruncatedDualSolution> {
    let a = crossover_a(coeffs, kernel, opts.k)?;
    if r <= a {
        return Err(Error::Domain(format!("R = {r} must exceed the crossover A = {a}")));
    }
    let mu = lambda_guess.map(|l| l + 0.1 * l.abs() + 0.1).unwrap_or(1.0);
    solve_with_shift(coeffs, kernel, r, a, opts, mu)
}

/// Truncated solve on the dual grid graded for shift `mu`; the shift only
/// grows if the computed `λ_R` breaks the mesh Péclet bound.
fn solve_with_shift(
    coeffs: &Coefficients,
    kernel: FragmentKernel,
    r: f64,
    a: f64,
    opts: &DualOptions,
    mut mu: f64,
) -> Result<TruncatedDualSolution> {
    let s = small_exponent(coeffs);
    for _ in 0..4 {
        let z = dual_points(coeffs, opts.x_min, r, opts.q, mu);
        if z.len() - 1 > opts.max_unknowns {
            return Err(Error::NonConvergence(format!(
                "dual grid with R = {r} needs {} unknowns (cap {})",
                z.len() - 1,
                opts.max_unknowns
            )));
        }
        let (mm, pp) = assemble(coeffs, kernel, &z, s);
        let pair = perron_pair(&mm, &pp, mu)?;
        if peclet(coeffs, &z, pair.lambda) >= 1.0 {
            mu = pair.lambda + 0.1 * pair.lambda.abs() + 0.1;
            continue;
        }
        let r_top = *z.last().unwrap();
        let mut phi = pair.phi.clone();
        // sup over [0, A], with φ(A) taken by linear interpolation
        let a_edge = a.min(r_top);
        let j = z.partition_point(|&x| x <= a_edge).clamp(1, phi.len()) - 1;
        let phi_a = if j + 1 < phi.len() {
            let t = (a_edge - z[j]) / (z[j + 1] - z[j]);
            (1.0 - t) * phi[j] + t * phi[j + 1]
        } else {
            phi[j]
        };
        let sup = z.iter().zip(&phi).filter(|(&x, _)| x <= a_edge).map(|(_, &p)| p).fold(phi_a, f64::max);
        phi.iter_mut().for_each(|p| *p /= sup);
        let v = DVector::from_column_slice(&phi);
        let mv = &mm * &v;
        let res = (&mv - &pp * &v * pair.lambda).amax() / mv.amax().max(1e-300);
        phi.push(0.0);
        return Ok(TruncatedDualSolution {
            r: r_top,
            lambda_r: pair.lambda,
            nodes: z,
            phi_r: phi,
            a_norm: a_edge,
            residual: res,
            unknowns: pair.phi.len(),
            grid_shift: mu,
        });
    }
    Err(Error::NonConvergence("could not satisfy the monotonicity condition".into()))
}

/// Limit of the truncated solutions, evaluated by log-log interpolation
/// inside the trusted window and by power laws outside it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhiFunction {
    xs: Vec<f64>,
    ys: Vec<f64>,
    small_exponent: f64,
    large_exponent: f64,
}

impl PhiFunction {
    fn from_solution(sol: &TruncatedDualSolution, s: f64, k: f64) -> Self {
        let cut = sol.r / 2.0;
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            sol.nodes.iter().zip(&sol.phi_r).filter(|(&x, &p)| x <= cut && p > 0.0).map(|(&x, &p)| (x, p)).unzip();
        // Slope over the last octave of the window.
        let n = xs.len();
        let j = xs.partition_point(|&x| x < xs[n - 1] / 2.0).min(n - 2);
        let slope = (ys[n - 1] / ys[j]).ln() / (xs[n - 1] / xs[j]).ln();
        Self { xs, ys, small_exponent: s, large_exponent: slope.clamp(0.0, k) }
    }

    pub fn window(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] * (x / self.xs[0]).powf(self.small_exponent);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] * (x / self.xs[n - 1]).powf(self.large_exponent);
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let t = (x / self.xs[i]).ln() / (self.xs[i + 1] / self.xs[i]).ln();
        (self.ys[i].ln() * (1.0 - t) + self.ys[i + 1].ln() * t).exp()
    }

    pub fn on_grid(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes().iter().map(|&x| self.eval(x)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct DualEigen {
    pub lambda: f64,
    pub phi: PhiFunction,
    pub solutions: Vec<TruncatedDualSolution>,
    pub converged: bool,
    /// `max φ/(1 + x^k)` over the finest solve.
    pub empirical_c: f64,
}

impl DualEigen {
    pub fn lambdas(&self) -> Vec<f64> {
        self.solutions.iter().map(|s| s.lambda_r).collect()
    }
}

pub fn window_distance(a: &TruncatedDualSolution, b: &TruncatedDualSolution, upto: f64) -> f64 {
    // `a` is the smaller-radius solve; `b` is read by interpolation.
    let pb = PhiFunction {
        xs: b.nodes[..b.nodes.len() - 1].to_vec(),
        ys: b.phi_r[..b.phi_r.len() - 1].to_vec(),
        small_exponent: 0.0,
        large_exponent: 0.0,
    };
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for (&x, &p) in a.nodes.iter().zip(&a.phi_r) {
        if x > upto {
            break;
        }
        let pbx = pb.eval(x);
        num = num.max((p - pbx).abs());
        den = den.max(pbx.abs());
    }
    num / den.max(1e-300)
}

/// `(λ, φ)` as the limit of truncated solves at `R, 2R, 4R, …`.
pub fn dual_eigen(coeffs: &Coefficients, kernel: FragmentKernel, tol: f64, opts: &DualOptions) -> Result<DualEigen> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let a = crossover_a(coeffs, kernel, opts.k)?;
    let mut r = opts.r0.unwrap_or(4.0 * a).max(1.5 * a);
    let s = small_exponent(coeffs);
    let mut sols: Vec<TruncatedDualSolution> = Vec::new();
    let mut converged = false;
    while r <= opts.r_max * (1.0 + 1e-12) {
        let shift = sols.last().map(|s| s.grid_shift).unwrap_or(1.0);
        let sol = match solve_with_shift(coeffs, kernel, r, a, opts, shift) {
            Ok(sol) => sol,
            Err(e) if !sols.is_empty() => {
                log::warn!("stopping the radius sweep at R = {r}: {e}");
                break;
            }
            Err(e) => return Err(e),
        };
        if !sols.is_empty() && !(sol.lambda_r > 0.0) {
            return Err(Error::Positivity(format!("lambda_R = {} is not positive", sol.lambda_r)));
        }
        log::debug!("R = {:.4}: lambda_R = {:.12}, unknowns = {}", sol.r, sol.lambda_r, sol.unknowns);
        if let Some(prev) = sols.last() {
            let dl = (sol.lambda_r - prev.lambda_r).abs();
            let dphi = window_distance(prev, &sol, prev.r / 2.0);
            if dl <= tol * sol.lambda_r.abs() && dphi <= tol.max(1e-12) {
                converged = true;
            }
        }
        r = 2.0 * sol.r;
        sols.push(sol);
        if converged {
            break;
        }
    }
    let last = sols.last().ok_or_else(|| Error::NonConvergence("no truncated solve".into()))?;
    let phi = PhiFunction::from_solution(last, s, opts.k);
    let empirical_c =
        last.nodes.iter().zip(&last.phi_r).map(|(&x, &p)| p / (1.0 + x.powf(opts.k))).fold(0.0f64, f64::max);
    Ok(DualEigen { lambda: last.lambda_r, phi, solutions: sols, converged, empirical_c })
}

#[derive(Clone, Debug)]
pub struct DirectOptions {
    pub dt: f64,
    pub tol: f64,
    pub t_max: f64,
}

#[derive(Clone, Debug)]
pub struct DirectEigen {
    pub triple: EigenTriple,
    pub converged: bool,
    /// TV distance between normalised snapshots one time unit apart.
    pub distances: Vec<f64>,
}

/// Long-time limit of the conservative semigroup, mapped back by `N = f/φ`.
pub fn direct_eigen(
    grid: &Arc<Grid>,
    coeffs: &Coefficients,
    kernel: FragmentKernel,
    lambda: f64,
    phi: &[f64],
    opts: &DirectOptions,
) -> Result<DirectEigen> {
    let ev = Evolver::new(grid, coeffs, kernel, EvolutionConfig::conservative(opts.dt, lambda, phi.to_vec()))?;
    let unit = ev.steps_for(1.0).max(1);
    let mut f = GridMeasure::from_density(grid, |x| x * (-x).exp());
    f.mass.iter_mut().zip(phi).for_each(|(m, p)| *m *= p);
    f = f.scaled(1.0 / f.total());
    let ones = vec![1.0; grid.len()];
    let mut distances = Vec::new();
    let mut converged = false;
    let mut average: Option<Vec<f64>> = None;
    let units = opts.t_max.ceil() as usize;
    let tail = 10usize.min(units / 2).max(1);
    for u in 0..units {
        let mut next = ev.advance(&f, unit);
        let total = next.total();
        next = next.scaled(1.0 / total);
        let d = weighted_tv_norm_values(&next.difference(&f).mass, &ones);
        distances.push(d);
        f = next;
        if u + tail >= units {
            let acc = average.get_or_insert_with(|| vec![0.0; grid.len()]);
            acc.iter_mut().zip(&f.mass).for_each(|(a, m)| *a += m / tail as f64);
        }
        if d <= opts.tol {
            converged = true;
            break;
        }
        // A plateau far above the tolerance means no convergence.
        if u >= 20 && d > 0.5 * distances[u - 10] && d > 1e3 * opts.tol {
            log::info!("direct eigenvector plateau at distance {d:.3e}");
            let acc: Vec<f64> = {
                let mut acc = vec![0.0; grid.len()];
                let mut g = f.clone();
                let steps = 10 * unit;
                for _ in 0..steps {
                    g = ev.step(&g);
                    acc.iter_mut().zip(&g.mass).for_each(|(a, m)| *a += m / steps as f64);
                }
                acc
            };
            average = Some(acc);
            break;
        }
    }
    let f_mass = if converged { f.mass.clone() } else { average.unwrap_or_else(|| f.mass.clone()) };
    let n_mass: Vec<f64> = f_mass.iter().zip(cell_average_phi(grid, phi)).map(|(f, p)| f / p).collect();
    let n = GridMeasure::from_masses(grid, n_mass)?;
    let triple = EigenTriple { lambda, n, phi: phi.to_vec(), a_norm: f64::NAN }.normalise();
    Ok(DirectEigen { triple, converged, distances })
}

/// `φ` averaged over the size range each cell stands for. Cell 0 also holds
/// everything below `x_min`, so it averages `φ` over `[0, e_1]` using the
/// local power law of the first two nodes.
pub(crate) fn cell_average_phi(grid: &Grid, phi: &[f64]) -> Vec<f64> {
    let mut out = phi.to_vec();
    if phi.len() >= 2 && phi[0] > 0.0 && phi[1] > 0.0 {
        let x = grid.nodes();
        let s = ((phi[1] / phi[0]).ln() / (x[1] / x[0]).ln()).clamp(0.0, 1.0);
        let e1 = grid.edges()[1];
        out[0] = phi[0] * (e1 / x[0]).powf(s) / (1.0 + s);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExplicitCase {
    /// `g = g0 x`, `B = b0 x^γ`, uniform kernel.
    SelfSimilar { g0: f64, b0: f64, gamma: f64 },
    /// `g = B = 1`, equal mitosis; `terms` terms of the alternating series.
    ConstantMitosis { terms: usize },
}

/// Coefficients `α_n` of the constant-mitosis profile, normalised to
/// `∫N = Σ (−1)^n α_n / 2^{n+1} = 1`.
pub fn mitosis_series_coefficients(terms: usize) -> Vec<f64> {
    let mut alpha = vec![1.0; terms.max(1)];
    for n in 1..alpha.len() {
        alpha[n] = 2.0 / (2f64.powi(n as i32) - 1.0) * alpha[n - 1];
    }
    let integral: f64 =
        alpha.iter().enumerate().map(|(n, &a)| if n % 2 == 0 { a } else { -a } / 2f64.powi(n as i32 + 1)).sum();
    alpha.iter().map(|a| a / integral).collect()
}

/// The closed-form profile as a density.
pub fn explicit_density(case: ExplicitCase) -> Box<dyn Fn(f64) -> f64 + Send + Sync> {
    match case {
        ExplicitCase::SelfSimilar { g0, b0, gamma: gm } => {
            let c = b0 / (gm * g0);
            let pre = c.powf(1.0 / gm) * gm / gamma(1.0 / gm);
            Box::new(move |x| pre * (-c * x.powf(gm)).exp())
        }
        ExplicitCase::ConstantMitosis { terms } => {
            let alpha = mitosis_series_coefficients(terms);
            Box::new(move |x| {
                alpha
                    .iter()
                    .enumerate()
                    .map(|(n, a)| {
                        let t = a * (-(2f64.powi(n as i32 + 1)) * x).exp();
                        if n % 2 == 0 {
                            t
                        } else {
                            -t
                        }
                    })
                    .sum()
            })
        }
    }
}

/// The closed-form dual eigenfunction.
pub fn explicit_phi(case: ExplicitCase) -> Box<dyn Fn(f64) -> f64 + Send + Sync> {
    match case {
        ExplicitCase::SelfSimilar { g0, b0, gamma: gm } => {
            let c = b0 / (gm * g0);
            let pre = c.powf(1.0 / gm) * gamma(1.0 / gm) / gamma(2.0 / gm);
            Box::new(move |x| pre * x)
        }
        ExplicitCase::ConstantMitosis { .. } => Box::new(|_| 1.0),
    }
}

/// Closed-form eigenelements sampled on `grid` (cell masses of `N`).
pub fn explicit_eigen(case: ExplicitCase, grid: &Arc<Grid>) -> Result<EigenTriple> {
    let lambda = match case {
        ExplicitCase::SelfSimilar { g0, b0, gamma } => {
            if !(g0 > 0.0 && b0 > 0.0 && gamma > 0.0) {
                return Err(Error::Domain("self-similar case needs g0, b0, gamma > 0".into()));
            }
            g0
        }
        ExplicitCase::ConstantMitosis { terms } => {
            if terms == 0 {
                return Err(Error::Domain("the series needs at least one term".into()));
            }
            1.0
        }
    };
    let mass = match case {
        ExplicitCase::ConstantMitosis { terms } => {
            let alpha = mitosis_series_coefficients(terms);
            grid.edges()
                .windows(2)
                .map(|w| {
                    alpha
                        .iter()
                        .enumerate()
                        .map(|(n, a)| {
                            let c = 2f64.powi(n as i32 + 1);
                            let t = a * ((-c * w[0]).exp() - (-c * w[1]).exp()) / c;
                            if n % 2 == 0 {
                                t
                            } else {
                                -t
                            }
                        })
                        .sum()
                })
                .collect()
        }
        _ => GridMeasure::from_density(grid, explicit_density(case)).mass,
    };
    let phi_fn = explicit_phi(case);
    Ok(EigenTriple {
        lambda,
        n: GridMeasure::from_masses(grid, mass)?,
        phi: grid.nodes().iter().map(|&x| phi_fn(x)).collect(),
        a_norm: f64::NAN,
    })
}
