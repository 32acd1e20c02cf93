//! Time stepping of the rescaled equation and of its conservative form.
//!
//! Transport is exact along characteristics (a precomputed push-forward
//! plan); fragmentation is an explicit linear SSP Runge–Kutta exchange step. The
//! two are combined by Lie or Strang splitting.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{Grid, GridMeasure, TransportPlan};
use crate::error::{Error, Result};
use crate::flow::FlowMap;
use crate::model::{Coefficients, FragmentKernel};
use crate::quad;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// The equation for `m = e^{-λt} n`.
    Scaled,
    /// The equation for `f = φ m`, which conserves `∫ f`.
    Conservative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Splitting {
    Lie,
    #[default]
    Strang,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub lambda: f64,
    pub mode: Mode,
    /// Dual eigenfunction sampled at the grid nodes; required in
    /// conservative mode.
    pub phi: Option<Vec<f64>>,
    pub splitting: Splitting,
}

impl EvolutionConfig {
    pub fn scaled(dt: f64, lambda: f64) -> Self {
        Self { dt, lambda, mode: Mode::Scaled, phi: None, splitting: Splitting::Strang }
    }

    pub fn conservative(dt: f64, lambda: f64, phi: Vec<f64>) -> Self {
        Self { dt, lambda, mode: Mode::Conservative, phi: Some(phi), splitting: Splitting::Strang }
    }

    pub fn with_splitting(mut self, splitting: Splitting) -> Self {
        self.splitting = splitting;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<GridMeasure>,
    /// `∫ φ m` per snapshot (the total mass in conservative mode); empty
    /// when no `φ` is known.
    pub conserved_series: Vec<f64>,
}

/// The positive part of the fragmentation operator,
/// `m ↦ ∫_x^∞ B(y)/y p(x/y) m(y) dy`, on cell masses.
///
/// Offspring that would land below `x_min` are kept in the first cell with
/// their size (first moment) preserved, so that fragmentation conserves
/// size exactly on the grid.
#[derive(Clone, Debug)]
pub struct GainOperator {
    kernel: FragmentKernel,
    rates: Vec<f64>,
    nodes: Vec<f64>,
    widths: Vec<f64>,
    /// Own-cell split of the uniform kernel: number into the parent cell
    /// and into the one below it, per unit `B m`.
    own: Vec<f64>,
    down: Vec<f64>,
    /// Number placed in cell 0 per unit `B m` for offspring below `x_min`.
    floor: Vec<f64>,
    q: usize,
}

impl GainOperator {
    pub fn new(grid: &Grid, coeffs: &Coefficients, kernel: FragmentKernel) -> Result<Self> {
        let nodes = grid.nodes().to_vec();
        let edges = grid.edges();
        let n = nodes.len();
        let rates: Vec<f64> = nodes.iter().map(|&x| coeffs.rate(x)).collect();
        let widths = grid.widths();
        let (e0, y0) = (edges[0], nodes[0]);
        let mut own = vec![0.0; n];
        let mut down = vec![0.0; n];
        let mut floor = vec![0.0; n];
        let mut q = 0;
        match kernel {
            FragmentKernel::Uniform => {
                floor[0] = 1.0;
                for j in 1..n {
                    let (y, e, yb) = (nodes[j], edges[j], nodes[j - 1]);
                    let d = (y - e) * (y - e) / (y * (y - yb));
                    down[j] = d;
                    own[j] = 2.0 * (y - e) / y - d;
                    floor[j] = e0 * e0 / (y * y0);
                }
            }
            FragmentKernel::EqualMitosis => {
                q = grid
                    .dyadic_q()
                    .ok_or_else(|| Error::GridKernelMismatch("equal mitosis needs a dyadic grid".into()))?;
                for j in 0..q.min(n) {
                    floor[j] = nodes[j] / y0;
                }
            }
        }
        Ok(Self { kernel, rates, nodes, widths, own, down, floor, q })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn apply(&self, m: &[f64]) -> Vec<f64> {
        let n = m.len();
        let mut out = vec![0.0; n];
        match self.kernel {
            FragmentKernel::Uniform => {
                let mut suffix = 0.0;
                let mut to_floor = 0.0;
                for i in (0..n).rev() {
                    let bm = self.rates[i] * m[i];
                    out[i] += self.widths[i] * suffix + self.own[i] * bm;
                    if i > 0 {
                        out[i - 1] += self.down[i] * bm;
                    }
                    to_floor += self.floor[i] * bm;
                    suffix += 2.0 * bm / self.nodes[i];
                }
                out[0] += to_floor;
            }
            FragmentKernel::EqualMitosis => {
                let q = self.q;
                for j in 0..n {
                    let bm = self.rates[j] * m[j];
                    if j >= q {
                        out[j - q] += 2.0 * bm;
                    } else {
                        out[0] += self.floor[j] * bm;
                    }
                }
            }
        }
        out
    }

    /// `Gᵀ ψ`.
    pub fn apply_transpose(&self, psi: &[f64]) -> Vec<f64> {
        let n = psi.len();
        let mut out = vec![0.0; n];
        match self.kernel {
            FragmentKernel::Uniform => {
                let mut prefix = 0.0;
                for j in 0..n {
                    let mut s = self.own[j] * psi[j] + self.floor[j] * psi[0];
                    if j > 0 {
                        s += self.down[j] * psi[j - 1] + 2.0 * prefix / self.nodes[j];
                    }
                    out[j] = self.rates[j] * s;
                    prefix += self.widths[j] * psi[j];
                }
            }
            FragmentKernel::EqualMitosis => {
                for j in 0..n {
                    let s = if j >= self.q { 2.0 * psi[j - self.q] } else { self.floor[j] * psi[0] };
                    out[j] = self.rates[j] * s;
                }
            }
        }
        out
    }
}

/// Gain measure of `mu`.
pub fn fragmentation_gain(mu: &GridMeasure, kernel: FragmentKernel, coeffs: &Coefficients) -> Result<GridMeasure> {
    let op = GainOperator::new(mu.grid(), coeffs, kernel)?;
    GridMeasure::from_masses(mu.grid(), op.apply(&mu.mass))
}

/// `Σ φ_i m_i`.
pub fn conserved_functional(f: &GridMeasure, phi: &[f64]) -> f64 {
    f.integrate(phi)
}

/// Largest time step passing the stability checks of [`Evolver::new`].
pub fn max_stable_dt(
    grid: &Grid,
    coeffs: &Coefficients,
    kernel: FragmentKernel,
    lambda: f64,
    phi: Option<&[f64]>,
) -> Result<f64> {
    let gain = GainOperator::new(grid, coeffs, kernel)?;
    let mut worst = gain.rates().iter().map(|b| b + lambda).fold(0.0f64, f64::max);
    if let Some(phi) = phi {
        let gt = gain.apply_transpose(phi);
        worst = gt.iter().zip(phi).map(|(a, p)| a / p).fold(worst, f64::max);
    }
    Ok(if worst > 0.0 { 0.5 / worst } else { f64::INFINITY })
}

/// A configured time stepper on a fixed grid.
#[derive(Clone, Debug)]
pub struct Evolver {
    grid: Arc<Grid>,
    cfg: EvolutionConfig,
    plan: TransportPlan,
    survival: Option<Vec<f64>>,
    gain: GainOperator,
    /// Conservative mode: `φ` and the exit rates `q = Gᵀφ / φ`.
    phi: Option<Vec<f64>>,
    exit: Option<Vec<f64>>,
    /// Scaled mode without growth: the loss `B + λ` is stepped together
    /// with the gain so that linear invariants such as `∫ x m` are exact.
    loss: Option<Vec<f64>>,
}

impl Evolver {
    pub fn new(grid: &Arc<Grid>, coeffs: &Coefficients, kernel: FragmentKernel, cfg: EvolutionConfig) -> Result<Self> {
        let dt = cfg.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let gain = GainOperator::new(grid, coeffs, kernel)?;
        let c_max = gain.rates().iter().map(|b| b + cfg.lambda).fold(0.0f64, f64::max);
        if dt * c_max > 0.5 * (1.0 + 1e-12) {
            return Err(Error::Stability { dt, product: dt * c_max });
        }
        let flow = FlowMap::new(coeffs)?;
        let plan = TransportPlan::new(grid, |x| flow.flow(dt, x).unwrap_or(f64::INFINITY));
        let (survival, phi, exit, loss) = match cfg.mode {
            Mode::Scaled if flow.is_identity() => {
                let loss = gain.rates().iter().map(|b| b + cfg.lambda).collect();
                (None, None, None, Some(loss))
            }
            Mode::Scaled => {
                let lambda = cfg.lambda;
                let s = grid
                    .nodes()
                    .iter()
                    .map(|&y| {
                        let integral =
                            quad::gauss3(|tau| coeffs.rate(flow.flow(tau, y).unwrap_or(y)) + lambda, 0.0, dt);
                        (-integral).exp()
                    })
                    .collect();
                (Some(s), None, None, None)
            }
            Mode::Conservative => {
                let phi = cfg.phi.clone().ok_or(Error::MissingPhi)?;
                if phi.len() != grid.len() || phi.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                    return Err(Error::Config("phi must be positive and sampled at every grid node".into()));
                }
                let gt = gain.apply_transpose(&phi);
                let exit: Vec<f64> = gt.iter().zip(&phi).map(|(a, p)| a / p).collect();
                let q_max = exit.iter().cloned().fold(0.0f64, f64::max);
                if dt * q_max > 0.5 * (1.0 + 1e-12) {
                    return Err(Error::Stability { dt, product: dt * q_max });
                }
                (None, Some(phi), Some(exit), None)
            }
        };
        Ok(Self { grid: grid.clone(), cfg, plan, survival, gain, phi, exit, loss })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    pub fn phi(&self) -> Option<&[f64]> {
        self.phi.as_deref()
    }

    fn rhs(&self, m: &[f64]) -> Vec<f64> {
        match (&self.phi, &self.exit) {
            (Some(phi), Some(exit)) => {
                let u: Vec<f64> = m.iter().zip(phi).map(|(f, p)| f / p).collect();
                let g = self.gain.apply(&u);
                g.iter().zip(phi).zip(m.iter().zip(exit)).map(|((g, p), (f, q))| p * g - q * f).collect()
            }
            _ => {
                let mut g = self.gain.apply(m);
                if let Some(loss) = &self.loss {
                    g.iter_mut().zip(m.iter().zip(loss)).for_each(|(g, (m, c))| *g -= c * m);
                }
                g
            }
        }
    }

    /// Fourth-order linear SSP Runge–Kutta step of the exchange part,
    /// written as a positive combination of forward Euler iterates.
    fn react(&self, m: &[f64], h: f64) -> Vec<f64> {
        const ALPHA: [f64; 5] = [3.0 / 8.0, 1.0 / 3.0, 1.0 / 4.0, 0.0, 1.0 / 24.0];
        let mut out: Vec<f64> = m.iter().map(|v| ALPHA[0] * v).collect();
        let mut u = m.to_vec();
        for alpha in &ALPHA[1..] {
            let k = self.rhs(&u);
            u.iter_mut().zip(&k).for_each(|(a, k)| *a += h * k);
            if *alpha != 0.0 {
                out.iter_mut().zip(&u).for_each(|(o, a)| *o += alpha * a);
            }
        }
        out
    }

    fn transport(&self, m: &[f64]) -> (Vec<f64>, f64) {
        self.plan.apply(m, self.survival.as_deref())
    }

    pub fn step(&self, state: &GridMeasure) -> GridMeasure {
        let dt = self.cfg.dt;
        let (mass, esc) = match self.cfg.splitting {
            Splitting::Lie => {
                let (m, esc) = self.transport(&state.mass);
                (self.react(&m, dt), esc)
            }
            Splitting::Strang => {
                let m = self.react(&state.mass, 0.5 * dt);
                let (m, esc) = self.transport(&m);
                (self.react(&m, 0.5 * dt), esc)
            }
        };
        let mut out = GridMeasure::from_masses(state.grid(), mass).expect("grid unchanged");
        out.escaped = state.escaped + esc;
        out
    }

    pub fn advance(&self, state: &GridMeasure, steps: usize) -> GridMeasure {
        let mut s = state.clone();
        for _ in 0..steps {
            s = self.step(&s);
        }
        s
    }

    /// Number of steps covering `t`; `t` is rounded to a whole number of steps.
    pub fn steps_for(&self, t: f64) -> usize {
        (t / self.cfg.dt - 1e-9).ceil().max(0.0) as usize
    }

    /// Runs to time `t_end`, keeping every `stride`-th step.
    pub fn evolve(&self, n0: &GridMeasure, t_end: f64, stride: usize) -> Result<Trajectory> {
        if t_end < 0.0 {
            return Err(Error::Domain("final time must be nonnegative".into()));
        }
        let stride = stride.max(1);
        let steps = self.steps_for(t_end);
        let weight = match self.cfg.mode {
            Mode::Conservative => Some(vec![1.0; self.grid.len()]),
            Mode::Scaled => self.cfg.phi.clone(),
        };
        let mut out = Trajectory { times: vec![0.0], snapshots: vec![n0.clone()], conserved_series: Vec::new() };
        if let Some(w) = &weight {
            out.conserved_series.push(n0.integrate(w));
        }
        let mut s = n0.clone();
        for k in 1..=steps {
            s = self.step(&s);
            if k % stride == 0 || k == steps {
                out.times.push(k as f64 * self.cfg.dt);
                if let Some(w) = &weight {
                    out.conserved_series.push(s.integrate(w));
                }
                out.snapshots.push(s.clone());
            }
        }
        Ok(out)
    }
}

/// One step from `state` with a freshly built stepper.
pub fn step(
    state: &GridMeasure,
    cfg: &EvolutionConfig,
    coeffs: &Coefficients,
    kernel: FragmentKernel,
) -> Result<GridMeasure> {
    Ok(Evolver::new(state.grid(), coeffs, kernel, cfg.clone())?.step(state))
}

pub fn evolve(
    n0: &GridMeasure,
    t_end: f64,
    cfg: &EvolutionConfig,
    coeffs: &Coefficients,
    kernel: FragmentKernel,
    stride: usize,
) -> Result<Trajectory> {
    Evolver::new(n0.grid(), coeffs, kernel, cfg.clone())?.evolve(n0, t_end, stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{make_grid, GridScheme};

    #[test]
    fn mitosis_gain_halves_size() {
        let grid = make_grid(1.0, 8.0, GridScheme::DyadicLog(1)).unwrap();
        let c = Coefficients::power_law(0.0, 1.0, 0.0, 1.0).unwrap();
        let mut m = GridMeasure::zeros(&grid);
        m.mass[1] = 1.0;
        let gain = fragmentation_gain(&m, FragmentKernel::EqualMitosis, &c).unwrap();
        assert_eq!(gain.mass, vec![2.0, 0.0, 0.0]);
        let lin = make_grid(1.0, 8.0, GridScheme::LogUniform(3)).unwrap();
        assert!(matches!(
            fragmentation_gain(&GridMeasure::zeros(&lin), FragmentKernel::EqualMitosis, &c),
            Err(Error::GridKernelMismatch(_))
        ));
    }

    #[test]
    fn uniform_gain_number_and_size() {
        let grid = make_grid(1e-3, 10.0, GridScheme::LogUniform(200)).unwrap();
        let c = Coefficients::power_law(0.0, 1.0, 0.0, 1.0).unwrap();
        let j = grid.locate(3.0).unwrap();
        let y = grid.nodes()[j];
        let mut m = GridMeasure::zeros(&grid);
        m.mass[j] = 1.0;
        let gain = fragmentation_gain(&m, FragmentKernel::Uniform, &c).unwrap();
        assert!(gain.is_nonnegative());
        assert!((gain.total() - 2.0).abs() <= 2.0 * grid.x_min() / y);
        let size = gain.integrate(grid.nodes());
        assert!((size - y).abs() < 1e-13 * y);
    }

    #[test]
    fn transpose_is_adjoint() {
        for (kernel, scheme) in [
            (FragmentKernel::Uniform, GridScheme::LogUniform(40)),
            (FragmentKernel::EqualMitosis, GridScheme::DyadicLog(4)),
        ] {
            let grid = make_grid(0.01, 20.0, scheme).unwrap();
            let c = Coefficients::power_law(1.0, 1.0, 1.5, 1.0).unwrap();
            let op = GainOperator::new(&grid, &c, kernel).unwrap();
            let n = grid.len();
            let u: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64).sin() + 1.5).collect();
            let v: Vec<f64> = (0..n).map(|i| ((i * 3 % 5) as f64).cos() + 1.2).collect();
            let lhs: f64 = op.apply(&u).iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = op.apply_transpose(&v).iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-11 * lhs.abs());
        }
    }

    #[test]
    fn pure_transport_moves_dirac() {
        let grid = make_grid(0.01, 100.0, GridScheme::LogUniform(400)).unwrap();
        let c = Coefficients::power_law(1.0, 1.0, 0.0, 0.0).unwrap();
        let dt = grid.log_step();
        let ev = Evolver::new(&grid, &c, FragmentKernel::Uniform, EvolutionConfig::scaled(dt, 0.0)).unwrap();
        let m = GridMeasure::dirac(&grid, 1.0).unwrap();
        let i = grid.locate(1.0).unwrap();
        let out = ev.advance(&m, 5);
        assert!((out.mass[i + 5] - 1.0).abs() < 1e-14);
        assert!((out.total() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stability_bound() {
        let grid = make_grid(0.01, 100.0, GridScheme::LogUniform(40)).unwrap();
        let c = Coefficients::power_law(1.0, 1.0, 1.0, 1.0).unwrap();
        let err = Evolver::new(&grid, &c, FragmentKernel::Uniform, EvolutionConfig::scaled(0.1, 1.0));
        assert!(matches!(err, Err(Error::Stability { .. })));
    }

    #[test]
    fn conservative_needs_phi() {
        let grid = make_grid(0.01, 10.0, GridScheme::LogUniform(40)).unwrap();
        let c = Coefficients::power_law(1.0, 1.0, 1.0, 1.0).unwrap();
        let mut cfg = EvolutionConfig::conservative(0.01, 1.0, vec![1.0; 40]);
        cfg.phi = None;
        assert!(matches!(Evolver::new(&grid, &c, FragmentKernel::Uniform, cfg), Err(Error::MissingPhi)));
    }
}
