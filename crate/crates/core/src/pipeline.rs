//! Run configuration and the staged certificate pipeline: hypotheses, eigen
//! elements, drift, minorisation, Harris constants and the empirical rate.

use std::f64::consts::LN_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{make_grid, Grid, GridMeasure, GridScheme, WeightSpec};
use crate::eigen::{direct_eigen, dual_eigen, DirectOptions, DualOptions, EigenTriple, PhiFunction};
use crate::error::{Error, Result};
use crate::harris::{harris_rate, selfsim_certificate, HarrisCertificate, HarrisChoices, LogReal};
use crate::lyapunov::{
    drift_constants, phi_linear, selfsim_drift_constant, verify_drift, DriftCertificate, DriftCheckSetup, DriftOptions,
    DualInput, Regime,
};
use crate::minorisation::{
    exact_shift_grid, mitosis_proof_interval, replay, selfsim_small_set, small_set_constants, MinorisationSetup,
    NuShape,
};
use crate::model::{check_hypotheses, Coefficients, Family, FragmentKernel, HypothesisReport, Table};
use crate::provenance::{Provenance, Tagged};
use crate::ratemeter::{
    gaussian_bump, measure_rate, rate_vs_certificate, ComparisonVerdict, RateComparison, RateMeasurement, RateOptions,
    RateOutcome, RateSetup, Rejection,
};
use crate::semigroup::{max_stable_dt, Splitting};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GrowthSpec {
    /// `g(x) = g0 x^a`.
    Power {
        a: f64,
        g0: f64,
    },
    Table {
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum RateSpec {
    /// `B(x) = b0 x^b`.
    Power {
        b: f64,
        b0: f64,
    },
    Table {
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Uniform,
    Mitosis,
}

impl From<KernelName> for FragmentKernel {
    fn from(k: KernelName) -> Self {
        match k {
            KernelName::Uniform => FragmentKernel::Uniform,
            KernelName::Mitosis => FragmentKernel::EqualMitosis,
        }
    }
}

/// Evolution grid used by `eigen`, `evolve` and `rate`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub cells_per_octave: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionBlock {
    /// Time step; chosen from the grid when absent.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub splitting: Splitting,
    /// Snapshot spacing for `evolve` output.
    pub sample_dt: Option<f64>,
    /// Stopping distance of the direct eigen solve.
    pub eigen_tol: f64,
}

impl Default for EvolutionBlock {
    fn default() -> Self {
        Self { dt: None, t_end: 10.0, splitting: Splitting::Strang, sample_dt: None, eigen_tol: 1e-13 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateMode {
    /// Closed form for self-similar models, simulation otherwise.
    #[default]
    Auto,
    ClosedForm,
    Simulated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateBlock {
    pub mode: CertificateMode,
    /// Small weight exponent.
    pub k: Option<f64>,
    /// Large weight exponent; must exceed `1 + ξ`.
    #[serde(rename = "K_w")]
    pub big_k: Option<f64>,
    pub t0: f64,
    /// Small-set level; `4 K_d / (1 − γ)` when absent.
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub drift_trials: usize,
    pub probes: usize,
    pub nu_shape: NuShape,
    /// Minimum number of steps over `t0` on exact-shift grids.
    pub min_steps: usize,
    /// Cells per octave of the minorisation grid when `g` is not linear.
    pub cells_per_octave: usize,
    /// Upper bound on `cells × steps × probes` for the simulated small set.
    pub max_work: f64,
    /// Times at which an expected-empty minorisation interval is tested.
    pub no_gap_times: Vec<f64>,
}

impl Default for CertificateBlock {
    fn default() -> Self {
        Self {
            mode: CertificateMode::Auto,
            k: None,
            big_k: None,
            t0: 2.0 * LN_2,
            r: None,
            drift_trials: 32,
            probes: 33,
            nu_shape: NuShape::Uniform,
            min_steps: 200,
            cells_per_octave: 32,
            max_work: 5e8,
            no_gap_times: vec![0.5, 1.0, 2.0 * LN_2, 2.0, 4.0, 8.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateBlock {
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Centres of the Gaussian initial bumps.
    pub bumps: Vec<f64>,
    pub width: f64,
}

impl Default for RateBlock {
    fn default() -> Self {
        Self { t_end: 20.0, bumps: vec![3.0], width: 0.5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Summary JSON path; `--out` takes precedence.
    pub summary: Option<String>,
    /// Directory for CSV curves.
    pub curves: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub g: GrowthSpec,
    #[serde(rename = "B")]
    pub b: RateSpec,
    pub kernel: KernelName,
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub evolution: EvolutionBlock,
    #[serde(default)]
    pub certificate: CertificateBlock,
    #[serde(default)]
    pub rate: RateBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.certificate;
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive(c.t0, "certificate.t0")?;
        positive(self.rate.t_end, "rate.T")?;
        positive(self.rate.width, "rate.width")?;
        positive(self.evolution.t_end, "evolution.t_end")?;
        positive(self.evolution.eigen_tol, "evolution.eigen_tol")?;
        if let Some(r) = c.r {
            positive(r, "certificate.R")?;
        }
        if let Some(dt) = self.evolution.dt {
            positive(dt, "evolution.dt")?;
        }
        if c.probes == 0 || c.drift_trials == 0 {
            return Err(Error::Config("certificate.probes and drift_trials must be positive".into()));
        }
        if self.rate.bumps.is_empty() {
            return Err(Error::Config("rate.bumps must not be empty".into()));
        }
        Ok(())
    }

    /// Coefficients, kernel and the small-size exponent `ξ`.
    pub fn model(&self) -> Result<Model> {
        let kernel = FragmentKernel::from(self.kernel);
        let coeffs = match (&self.g, &self.b) {
            (GrowthSpec::Power { a, g0 }, RateSpec::Power { b, b0 }) => Coefficients::power_law(*a, *g0, *b, *b0),
            (GrowthSpec::Table { x: gx, y: gy }, RateSpec::Table { x: bx, y: by }) => Coefficients::tabulated(
                Table::new(gx.clone(), gy.clone(), false)?,
                Table::new(bx.clone(), by.clone(), true)?,
                self.xi.unwrap_or(0.0),
            ),
            _ => Err(Error::Config("g and B must both be power laws or both tables".into())),
        }
        .map_err(|e| Error::Config(e.to_string()))?;
        let xi = match self.xi {
            Some(xi) if xi < coeffs.xi() => {
                return Err(Error::Config(format!("xi = {xi} is below the growth exponent bound {}", coeffs.xi())))
            }
            Some(xi) => xi,
            None => coeffs.xi(),
        };
        Ok(Model { coeffs, kernel, xi })
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub coeffs: Coefficients,
    pub kernel: FragmentKernel,
    pub xi: f64,
}

impl Model {
    /// `g0` when `g(x) = g0 x`.
    pub fn linear_growth(&self) -> Option<f64> {
        match self.coeffs.family() {
            Family::PowerLaw { a, g0, .. } if *a == 1.0 && *g0 > 0.0 => Some(*g0),
            _ => None,
        }
    }

    /// `b` when `g = x`, `B = x^b` and the kernel is uniform.
    pub fn self_similar_b(&self) -> Option<f64> {
        match self.coeffs.family() {
            Family::PowerLaw { a, g0, b, b0 }
                if *a == 1.0 && *g0 == 1.0 && *b0 == 1.0 && *b > 0.0 && self.kernel == FragmentKernel::Uniform =>
            {
                Some(*b)
            }
            _ => None,
        }
    }

    fn regime(&self) -> Regime {
        match Regime::for_model(&self.coeffs) {
            Regime::LinearGrowth if self.kernel != FragmentKernel::Uniform => Regime::SuperlinearAt0,
            r => r,
        }
    }
}

/// `(k, K)` from the config with regime defaults.
fn exponents(cfg: &RunConfig, model: &Model, regime: Regime) -> (f64, f64) {
    let big_k = cfg.certificate.big_k.unwrap_or(2.0f64.max(model.xi + 2.0));
    let k = cfg.certificate.k.unwrap_or(match regime {
        Regime::LinearGrowth => 0.0,
        Regime::SublinearAt0 => 0.0,
        Regime::SuperlinearAt0 => -0.5,
    });
    (k, big_k)
}

fn use_closed_form(cfg: &RunConfig, model: &Model) -> Result<Option<f64>> {
    let b = model.self_similar_b();
    let c = &cfg.certificate;
    // The closed-form chain is for the weight 1 + x^2.
    let default_weight = c.k.is_none_or(|k| k == 0.0) && c.big_k.is_none_or(|k| k == 2.0);
    match c.mode {
        CertificateMode::Auto => Ok(b.filter(|_| default_weight)),
        CertificateMode::Simulated => Ok(None),
        CertificateMode::ClosedForm if !default_weight => {
            Err(Error::Config("the closed-form chain fixes k = 0 and K_w = 2".into()))
        }
        CertificateMode::ClosedForm => b.map(Some).ok_or_else(|| {
            Error::Config("the closed-form chain needs g = x, B = x^b (b > 0) and the uniform kernel".into())
        }),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesesStage {
    pub report: HypothesisReport,
    pub admissible: bool,
    pub failures: Vec<String>,
    pub xi: Tagged,
    #[serde(rename = "K_w")]
    pub big_k: Tagged,
    /// Equal mitosis without strict sublinearity of `g`: no spectral gap.
    pub no_gap_expected: bool,
}

/// Hypothesis checks plus the weight constraint `1 + ξ < K_w`.
pub fn stage_hypotheses(cfg: &RunConfig, model: &Model) -> Result<HypothesesStage> {
    let report = check_hypotheses(&model.coeffs, model.kernel);
    let (_, big_k) = exponents(cfg, model, model.regime());
    if !(big_k > 1.0 + model.xi) {
        return Err(Error::Constraint(format!(
            "weight exponent K_w = {big_k} must satisfy 1 + xi < K_w (xi = {})",
            model.xi
        )));
    }
    let failures: Vec<String> = report.failures().into_iter().map(String::from).collect();
    let no_gap_expected = model.kernel == FragmentKernel::EqualMitosis && !report.mitosis_growth.holds();
    Ok(HypothesesStage {
        admissible: report.admissible(),
        failures,
        report,
        xi: Tagged::closed_form(model.xi),
        big_k: Tagged::closed_form(big_k),
        no_gap_expected,
    })
}

/// `φ` as a function of `x`.
#[derive(Clone, Debug)]
pub enum PhiSource {
    /// `φ(x) = x`, exact when `g(x) = g0 x`.
    Linear,
    Dual(PhiFunction),
}

impl PhiSource {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PhiSource::Linear => x,
            PhiSource::Dual(p) => p.eval(x),
        }
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            PhiSource::Linear => Provenance::PaperClosedForm,
            PhiSource::Dual(_) => Provenance::Simulated,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenStage {
    pub lambda: Tagged,
    pub phi_source: Provenance,
    pub dual_converged: Option<bool>,
    pub dual_radii: Vec<Tagged>,
    pub direct_converged: bool,
    /// Last TV distance between snapshots one time unit apart.
    pub direct_distance: Option<Tagged>,
    pub cells: Tagged,
    pub x_min: Tagged,
    pub x_max: Tagged,
    pub dt: Tagged,
    /// `∫ x N` on the grid.
    pub mean_size: Tagged,
}

pub struct EigenData {
    pub lambda: f64,
    pub phi: PhiSource,
    pub grid: Arc<Grid>,
    pub dt: f64,
    pub triple: EigenTriple,
}

/// `(λ, φ)` in closed form or from the dual solver.
pub fn dual_elements(model: &Model) -> Result<(f64, PhiSource, Option<crate::eigen::DualEigen>)> {
    if let Some(g0) = model.linear_growth() {
        return Ok((g0, PhiSource::Linear, None));
    }
    let dual = dual_eigen(&model.coeffs, model.kernel, 1e-8, &DualOptions::default())?;
    Ok((dual.lambda, PhiSource::Dual(dual.phi.clone()), Some(dual)))
}

fn default_x_max(model: &Model) -> f64 {
    // Where fragmentation outpaces growth fifty-fold.
    (3..=6).map(|j| 2f64.powi(j)).find(|&x| model.coeffs.rate(x) * x >= 50.0 * model.coeffs.growth(x)).unwrap_or(64.0)
}

/// The evolution grid and step: exact cell shifts for `g = g0 x`.
pub fn evolution_grid(cfg: &RunConfig, model: &Model, lambda: f64, phi: &PhiSource) -> Result<(Arc<Grid>, f64)> {
    let x_min = cfg.grid.x_min.unwrap_or(1e-4);
    let x_max = cfg.grid.x_max.unwrap_or_else(|| default_x_max(model));
    let cap_for = |grid: &Grid| -> Result<f64> {
        let phi_grid: Vec<f64> = grid.nodes().iter().map(|&x| phi.eval(x)).collect();
        max_stable_dt(grid, &model.coeffs, model.kernel, lambda, Some(&phi_grid))
    };
    let build = |q: usize| make_grid(x_min, x_max, GridScheme::DyadicLog(q));
    if let Some(g0) = model.linear_growth() {
        let mut q = cfg.grid.cells_per_octave.unwrap_or(32);
        loop {
            let grid = build(q)?;
            let shift = grid.log_step() / g0;
            let cap = cap_for(&grid)?;
            let fixed_q = cfg.grid.cells_per_octave.is_some() || q >= 1024;
            let dt = match cfg.evolution.dt {
                Some(dt) => dt,
                None if shift <= cap * (1.0 + 1e-12) || !fixed_q => shift,
                // A whole fraction of a cell per step when refining stops.
                None => shift / (shift / cap).ceil(),
            };
            if dt <= cap * (1.0 + 1e-12) || fixed_q {
                return Ok((grid, dt));
            }
            q *= 2;
        }
    }
    let grid = build(cfg.grid.cells_per_octave.unwrap_or(64))?;
    let cap = cap_for(&grid)?;
    Ok((grid, cfg.evolution.dt.unwrap_or(cap)))
}

pub fn stage_eigen(cfg: &RunConfig, model: &Model) -> Result<(EigenStage, EigenData)> {
    let (lambda, phi, dual) = dual_elements(model)?;
    let (grid, dt) = evolution_grid(cfg, model, lambda, &phi)?;
    let phi_grid: Vec<f64> = grid.nodes().iter().map(|&x| phi.eval(x)).collect();
    let direct = direct_eigen(
        &grid,
        &model.coeffs,
        model.kernel,
        lambda,
        &phi_grid,
        &DirectOptions { dt, tol: cfg.evolution.eigen_tol, t_max: 300.0 },
    )?;
    let source = phi.provenance();
    let stage = EigenStage {
        lambda: Tagged { value: lambda, source },
        phi_source: source,
        dual_converged: dual.as_ref().map(|d| d.converged),
        dual_radii: dual
            .as_ref()
            .map(|d| d.solutions.iter().map(|s| Tagged::simulated(s.r)).collect())
            .unwrap_or_default(),
        direct_converged: direct.converged,
        direct_distance: direct.distances.last().map(|&d| Tagged::simulated(d)),
        cells: Tagged::simulated(grid.len() as f64),
        x_min: Tagged::simulated(grid.x_min()),
        x_max: Tagged::simulated(grid.x_max()),
        dt: Tagged::simulated(dt),
        mean_size: Tagged::simulated(direct.triple.n.integrate_fn(|x| x)),
    };
    Ok((stage, EigenData { lambda, phi, grid, dt, triple: direct.triple }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftStage {
    pub regime: Regime,
    pub k: Tagged,
    #[serde(rename = "K")]
    pub big_k: Tagged,
    pub t0: Tagged,
    pub c1: Tagged,
    pub c2: Tagged,
    #[serde(rename = "K_d")]
    pub k_d: Tagged,
    pub gamma: Tagged,
    /// Probe supremum of the drift function (of `Φ/φ` where `φ` enters).
    pub sup_drift: Tagged,
    /// Closed form only: the probe supremum stays below `C₂`.
    pub envelope_holds: Option<bool>,
    pub verification: Option<DriftVerification>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftVerification {
    pub trials: Tagged,
    pub violations: Tagged,
    pub worst_ratio: Tagged,
    pub dt: Tagged,
}

/// Closed-form self-similar drift with its probe envelope check.
pub fn selfsim_drift_stage(b: f64, t0: f64) -> Result<DriftStage> {
    let k_d = selfsim_drift_constant(b);
    let probes = DriftOptions::default();
    let ratio = (probes.hi / probes.lo).ln();
    let sup = (0..probes.probes)
        .map(|i| {
            let x = probes.lo * (ratio * i as f64 / (probes.probes - 1) as f64).exp();
            phi_linear(x, 0.0, 2.0, x.powf(b))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DriftStage {
        regime: Regime::LinearGrowth,
        k: Tagged::closed_form(0.0),
        big_k: Tagged::closed_form(2.0),
        t0: Tagged::closed_form(t0),
        c1: Tagged::closed_form(0.5),
        c2: Tagged::closed_form(0.5 * k_d),
        k_d: Tagged::closed_form(k_d),
        gamma: Tagged::closed_form((-t0 / 2.0).exp()),
        sup_drift: Tagged::simulated(sup),
        envelope_holds: Some(sup <= 0.5 * k_d),
        verification: None,
    })
}

/// Numeric drift constants for the model's regime.
pub fn drift_certificate(cfg: &RunConfig, model: &Model, lambda: f64, phi: &PhiSource) -> Result<DriftCertificate> {
    let regime = model.regime();
    let (k, big_k) = exponents(cfg, model, regime);
    let phi_fn = |x: f64| phi.eval(x);
    let dual = DualInput { lambda, phi: &phi_fn, source: phi.provenance() };
    drift_constants(regime, k, big_k, &model.coeffs, model.kernel, Some(dual), &DriftOptions::default())
}

fn drift_stage_from(cert: &DriftCertificate, t0: f64) -> DriftStage {
    DriftStage {
        regime: cert.regime,
        k: Tagged::closed_form(cert.k),
        big_k: Tagged::closed_form(cert.big_k),
        t0: Tagged::closed_form(t0),
        c1: Tagged::simulated(cert.c1),
        c2: Tagged::simulated(cert.c2),
        k_d: Tagged::simulated(cert.k_d),
        gamma: Tagged::simulated(cert.gamma(t0)),
        sup_drift: Tagged::simulated(cert.raw_sup),
        envelope_holds: None,
        verification: None,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinoriseStage {
    pub source: Provenance,
    #[serde(rename = "R")]
    pub r: Tagged,
    pub t0: Tagged,
    pub c_set: (Tagged, Tagged),
    pub interval: Option<(Tagged, Tagged)>,
    pub log_alpha: Tagged,
    /// Closed form: `ln α` with the alternative `R^γ` exponent.
    pub log_alpha_literal: Option<Tagged>,
    pub nu_mass: Option<Tagged>,
    pub replay_violations: Option<Tagged>,
    pub cells: Option<Tagged>,
    pub dt: Option<Tagged>,
}

/// Grid, step and `φ` on the nodes for the simulated small set.
pub struct SmallSetGrid {
    pub grid: Arc<Grid>,
    pub dt: f64,
    pub phi: Vec<f64>,
}

/// Hull of `{V ≤ R}` over `10^{-8}..10^8`; the lower end is 0 when it
/// reaches the first probe.
pub fn small_set_hull(cert: &DriftCertificate, phi: &PhiSource, r: f64) -> Result<(f64, f64)> {
    let xs: Vec<f64> = (0..=3200).map(|j| 10f64.powf(-8.0 + j as f64 / 200.0)).collect();
    let inside: Vec<f64> = xs.into_iter().filter(|&x| cert.weight(x, phi.eval(x)) <= r).collect();
    match (inside.first(), inside.last()) {
        // V bounded at the origin: the set reaches down to 0.
        (Some(&a), Some(&b)) if b < 1e8 => Ok((if a > 1e-8 { a } else { 0.0 }, b)),
        (Some(_), Some(_)) => Err(Error::Constraint(format!("the set V <= {r} is not bounded above on the probes"))),
        _ => Err(Error::EmptyInterval(format!("no probe has V <= R = {r}"))),
    }
}

pub fn small_set_grid(
    cfg: &RunConfig,
    model: &Model,
    lambda: f64,
    phi: &PhiSource,
    hull: (f64, f64),
) -> Result<SmallSetGrid> {
    let c = &cfg.certificate;
    let x_min = cfg.grid.x_min.unwrap_or(1e-4);
    let x_min = if hull.0 > 0.0 { x_min.min(hull.0 / 4.0) } else { x_min };
    let x_max = 2.0 * hull.1;
    let phi_fn = |x: f64| phi.eval(x);
    let (grid, dt) = if model.linear_growth().is_some() {
        exact_shift_grid(&model.coeffs, model.kernel, lambda, &phi_fn, x_min, x_max, c.t0, c.min_steps)?
    } else {
        let grid = make_grid(x_min, x_max, GridScheme::DyadicLog(c.cells_per_octave))?;
        let phi_grid: Vec<f64> = grid.nodes().iter().map(|&x| phi.eval(x)).collect();
        let cap = max_stable_dt(&grid, &model.coeffs, model.kernel, lambda, Some(&phi_grid))?;
        (grid, c.t0 / (c.t0 / cap).ceil())
    };
    let work = grid.len() as f64 * (c.t0 / dt).round() * c.probes as f64;
    if work > c.max_work {
        return Err(Error::Config(format!(
            "simulated small set needs {work:.2e} cell-steps (grid [{x_min:.3e}, {x_max:.3e}], {} cells, dt {dt:.3e}); \
             the limit certificate.max_work is {:.2e}",
            grid.len(),
            c.max_work
        )));
    }
    let phi = grid.nodes().iter().map(|&x| phi.eval(x)).collect();
    Ok(SmallSetGrid { grid, dt, phi })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifyStage {
    pub source: Provenance,
    pub gamma: Tagged,
    #[serde(rename = "K_d")]
    pub k_d: Tagged,
    #[serde(rename = "R")]
    pub r: Tagged,
    pub t0: Tagged,
    pub log_alpha: Tagged,
    pub log_alpha0: Tagged,
    pub gamma0: Tagged,
    pub log_beta: Tagged,
    /// `ᾱ = 1 − ε` with `ln ε` here.
    pub log_one_minus_alpha_bar: Tagged,
    pub alpha_bar: Tagged,
    #[serde(rename = "log_C")]
    pub log_c: Tagged,
    pub log_rho: Tagged,
}

impl CertifyStage {
    pub fn from_certificate(cert: &HarrisCertificate, source: Provenance) -> Self {
        let t = |v: f64| Tagged { value: v, source };
        Self {
            source,
            gamma: t(cert.gamma),
            k_d: t(cert.k_d),
            r: t(cert.r),
            t0: t(cert.t0),
            log_alpha: t(cert.alpha.ln),
            log_alpha0: t(cert.alpha0.ln),
            gamma0: t(cert.gamma0),
            log_beta: t(cert.beta.ln),
            log_one_minus_alpha_bar: t(cert.epsilon.ln),
            alpha_bar: t(cert.alpha_bar()),
            log_c: t(cert.log_c.to_f64()),
            log_rho: t(cert.rho.ln),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RateRun {
    pub bump_center: Tagged,
    /// `fitted` or the rejection kind.
    pub status: &'static str,
    #[serde(skip)]
    pub outcome: RateOutcome,
    pub rho_emp: Option<Tagged>,
    pub r_squared: Option<Tagged>,
    pub fit_window: Option<(Tagged, Tagged)>,
    /// Period of the residual oscillation when the fit was rejected for it.
    pub period: Option<Tagged>,
    pub verdict: ComparisonVerdict,
    /// `ln ρ_emp − ln ρ_cert`.
    pub log_gap: Option<Tagged>,
    #[serde(skip)]
    pub comparison: RateComparison,
    pub diagnostic: Option<String>,
}

impl RateRun {
    fn new(center: f64, outcome: RateOutcome, comparison: RateComparison) -> Self {
        let fit = outcome.fit();
        let status = match &outcome {
            RateOutcome::Fitted(_) => "fitted",
            RateOutcome::Rejected(Rejection::AlreadyStationary { .. }) => "already-stationary",
            RateOutcome::Rejected(Rejection::Oscillation { .. }) => "oscillation",
            RateOutcome::Rejected(Rejection::PoorFit { .. }) => "poor-fit",
            RateOutcome::Rejected(Rejection::NoDecay { .. }) => "no-decay",
            RateOutcome::Rejected(Rejection::TooFewSnapshots { .. }) => "too-few-snapshots",
        };
        Self {
            bump_center: Tagged::closed_form(center),
            status,
            rho_emp: fit.map(|f| Tagged::fitted(f.rho_emp)),
            r_squared: fit.map(|f| Tagged::fitted(f.r_squared)),
            fit_window: fit.map(|f| (Tagged::fitted(f.fit_window.0), Tagged::fitted(f.fit_window.1))),
            period: match &outcome {
                RateOutcome::Rejected(Rejection::Oscillation { period, .. }) => Some(Tagged::fitted(*period)),
                _ => None,
            },
            verdict: comparison.verdict.clone(),
            log_gap: comparison.log_gap.map(Tagged::fitted),
            diagnostic: match &outcome {
                RateOutcome::Rejected(r) => Some(r.diagnostic()),
                RateOutcome::Fitted(_) => None,
            },
            outcome,
            comparison,
        }
    }
}

fn serialize_weight<S: serde::Serializer>(w: &WeightSpec, s: S) -> std::result::Result<S::Ok, S::Error> {
    let v = match *w {
        WeightSpec::OnePlusXK { big_k } => serde_json::json!({"form": "1 + x^K", "K": Tagged::closed_form(big_k)}),
        WeightSpec::XkPlusXK { k, big_k } => serde_json::json!({
            "form": "x^k + x^K", "k": Tagged::closed_form(k), "K": Tagged::closed_form(big_k)
        }),
        WeightSpec::SelfSimilarQuadratic => serde_json::json!({"form": "1 + x^2"}),
    };
    v.serialize(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct RateStage {
    #[serde(serialize_with = "serialize_weight")]
    pub weight: WeightSpec,
    #[serde(rename = "T")]
    pub t_end: Tagged,
    pub runs: Vec<RateRun>,
}

/// Weight of the rate norm on `m`, matching the certificate's `V`.
pub fn rate_weight(model: &Model, closed_form: bool, cfg: &RunConfig) -> WeightSpec {
    if closed_form {
        return WeightSpec::SelfSimilarQuadratic;
    }
    let regime = model.regime();
    let (k, big_k) = exponents(cfg, model, regime);
    match regime {
        Regime::SublinearAt0 => WeightSpec::OnePlusXK { big_k },
        _ => WeightSpec::XkPlusXK { k, big_k },
    }
}

pub fn stage_rate(
    cfg: &RunConfig,
    model: &Model,
    eigen: &EigenData,
    weight: &WeightSpec,
    cert: Option<&HarrisCertificate>,
) -> Result<(RateStage, Vec<RateMeasurement>)> {
    let setup = RateSetup {
        grid: &eigen.grid,
        coeffs: &model.coeffs,
        kernel: model.kernel,
        triple: &eigen.triple,
        dt: eigen.dt,
    };
    let opts = RateOptions::new(cfg.rate.t_end);
    let mut runs = Vec::new();
    let mut curves = Vec::new();
    for &center in &cfg.rate.bumps {
        let n0 = gaussian_bump(&eigen.grid, center, cfg.rate.width);
        let m = measure_rate(&setup, &n0, &format!("gaussian bump at {center}"), weight, &opts)?;
        let comparison = rate_vs_certificate(&m.outcome, cert);
        runs.push(RateRun::new(center, m.outcome.clone(), comparison));
        curves.push(m);
    }
    Ok((RateStage { weight: *weight, t_end: Tagged::closed_form(cfg.rate.t_end), runs }, curves))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoGapStage {
    /// `(t, empty)` for each tested time.
    pub interval_empty: Vec<(Tagged, bool)>,
    pub all_empty: bool,
}

/// The mitosis interval construction at each configured time.
pub fn stage_no_gap(cfg: &RunConfig, model: &Model) -> NoGapStage {
    let (eta, theta) = (0.1, 10.0);
    let interval_empty: Vec<(Tagged, bool)> = cfg
        .certificate
        .no_gap_times
        .iter()
        .map(|&t| {
            let empty = matches!(mitosis_proof_interval(&model.coeffs, eta, theta, t), Err(Error::EmptyInterval(_)));
            (Tagged::closed_form(t), empty)
        })
        .collect();
    let all_empty = interval_empty.iter().all(|(_, e)| *e);
    NoGapStage { interval_empty, all_empty }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PipelineSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<HypothesesStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigen: Option<EigenStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minorise: Option<MinoriseStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_gap: Option<NoGapStage>,
    pub errors: Vec<StageError>,
    pub gates: Vec<Gate>,
    pub verdict: String,
    /// 0 when every gate passed, 1 otherwise.
    #[serde(skip)]
    pub exit_code: i32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
}

pub struct PipelineRun {
    pub summary: PipelineSummary,
    pub rate_curves: Vec<RateMeasurement>,
    pub eigen: Option<EigenData>,
}

impl PipelineSummary {
    fn gate(&mut self, name: &str, passed: bool) {
        self.gates.push(Gate { name: name.into(), passed });
    }

    fn fail(&mut self, stage: &str, e: &Error) {
        self.errors.push(StageError { stage: stage.into(), message: e.to_string() });
    }

    fn finish(&mut self, verdict: &str) {
        let ok = self.errors.is_empty() && self.gates.iter().all(|g| g.passed);
        self.exit_code = if ok { 0 } else { 1 };
        self.verdict = verdict.to_string();
    }
}

/// Last stage of a partial run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Hypotheses,
    Eigen,
    Drift,
    Minorise,
    Certify,
    Rate,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Hypotheses => "hypotheses",
            Stage::Eigen => "eigen",
            Stage::Drift => "drift",
            Stage::Minorise => "minorise",
            Stage::Certify => "certify",
            Stage::Rate => "rate",
        }
    }
}

/// Runs every stage; see [`run_until`].
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineRun> {
    run_until(cfg, Stage::Rate)
}

/// Runs the stages up to and including `last`. Errors after the first stage
/// end the run with exit code 1 and keep what was computed. Config and
/// weight errors are returned as `Err` (exit code 2).
pub fn run_until(cfg: &RunConfig, last: Stage) -> Result<PipelineRun> {
    let model = cfg.model()?;
    let mut s = PipelineSummary::default();
    let mut run = PipelineRun { summary: PipelineSummary::default(), rate_curves: Vec::new(), eigen: None };
    let hyp = stage_hypotheses(cfg, &model)?;
    let no_gap = hyp.no_gap_expected;
    let admissible = hyp.admissible;
    let failures = hyp.failures.join(", ");
    s.hypotheses = Some(hyp);
    let closed = use_closed_form(cfg, &model)?;

    if no_gap {
        let ng = stage_no_gap(cfg, &model);
        s.gate("minorisation interval empty at every tested time", ng.all_empty);
        s.no_gap = Some(ng);
        if last >= Stage::Eigen {
            match stage_eigen(cfg, &model) {
                Ok((st, data)) => {
                    s.eigen = Some(st);
                    if last == Stage::Rate {
                        let weight = rate_weight(&model, false, cfg);
                        match stage_rate(cfg, &model, &data, &weight, None) {
                            Ok((st, curves)) => {
                                let osc = st.runs.iter().all(|r| {
                                    matches!(r.outcome, RateOutcome::Rejected(Rejection::Oscillation { .. }))
                                        && r.comparison.verdict == ComparisonVerdict::ConsistentlyNoGap
                                });
                                s.gate("rate fit rejected with an oscillation diagnostic", osc);
                                s.rate = Some(st);
                                run.rate_curves = curves;
                            }
                            Err(e) => s.fail("rate", &e),
                        }
                    }
                    run.eigen = Some(data);
                }
                Err(e) => s.fail("eigen", &e),
            }
        }
        let observed = s.errors.is_empty() && s.gates.iter().all(|g| g.passed);
        s.finish(if observed { "no-gap expected and observed" } else { "no-gap expected but not observed" });
        run.summary = s;
        return Ok(run);
    }
    if !admissible {
        s.gate("hypotheses", false);
        s.finish(&format!("hypotheses fail: {failures}"));
        run.summary = s;
        return Ok(run);
    }
    s.gate("hypotheses", true);
    if last == Stage::Hypotheses {
        s.finish("hypotheses hold");
        run.summary = s;
        return Ok(run);
    }

    if closed.is_some() && last != Stage::Eigen && last != Stage::Rate {
        // The closed-form chain needs no eigen solve.
        if let Some(b) = closed {
            closed_form_chain(&mut s, b, cfg.certificate.t0, last);
        }
        let ok = s.errors.is_empty() && s.gates.iter().all(|g| g.passed);
        s.finish(&if ok { format!("{} stage passed", last.name()) } else { "gate failure".to_string() });
        run.summary = s;
        return Ok(run);
    }

    let data = match stage_eigen(cfg, &model) {
        Ok((st, data)) => {
            s.eigen = Some(st);
            data
        }
        Err(e) => {
            s.fail("eigen", &e);
            s.finish("eigen stage failed");
            run.summary = s;
            return Ok(run);
        }
    };
    if last == Stage::Eigen {
        s.gate("direct eigen solve converged", s.eigen.as_ref().is_some_and(|e| e.direct_converged));
        run.eigen = Some(data);
        let ok = s.gates.iter().all(|g| g.passed);
        s.finish(if ok { "eigen elements computed" } else { "gate failure" });
        run.summary = s;
        return Ok(run);
    }

    let t0 = cfg.certificate.t0;
    let cert = match closed {
        Some(b) => closed_form_chain(&mut s, b, t0, last),
        None => simulated_chain(&mut s, cfg, &model, &data, t0, last),
    };
    if last == Stage::Rate {
        let weight = rate_weight(&model, closed.is_some(), cfg);
        match stage_rate(cfg, &model, &data, &weight, cert.as_ref()) {
            Ok((st, curves)) => {
                let all_fit = st.runs.iter().all(|r| r.rho_emp.is_some());
                s.gate("rate fit accepted for every initial bump", all_fit);
                if cert.is_some() {
                    let holds = st.runs.iter().all(|r| r.comparison.verdict == ComparisonVerdict::LowerBoundHolds);
                    s.gate("rho_emp >= rho_certificate", holds);
                }
                s.rate = Some(st);
                run.rate_curves = curves;
            }
            Err(e) => s.fail("rate", &e),
        }
    }
    run.eigen = Some(data);
    let ok = s.errors.is_empty() && s.gates.iter().all(|g| g.passed);
    let verdict = match (ok, last) {
        (true, Stage::Rate) => "certified: rho_emp >= rho_certificate > 0".to_string(),
        (true, l) => format!("{} stage passed", l.name()),
        (false, _) => "gate failure".to_string(),
    };
    s.finish(&verdict);
    run.summary = s;
    Ok(run)
}

fn closed_form_chain(s: &mut PipelineSummary, b: f64, t0: f64, last: Stage) -> Option<HarrisCertificate> {
    match selfsim_drift_stage(b, t0) {
        Ok(d) => {
            s.gate("closed-form drift envelope", d.envelope_holds == Some(true));
            s.drift = Some(d);
        }
        Err(e) => s.fail("drift", &e),
    }
    if last == Stage::Drift {
        return None;
    }
    let k_d = selfsim_drift_constant(b);
    let r = 4.0 * k_d / (1.0 - (-t0 / 2.0).exp());
    match selfsim_small_set(b, t0, r) {
        Ok(m) => {
            s.minorise = Some(MinoriseStage {
                source: Provenance::PaperClosedForm,
                r: Tagged::closed_form(r),
                t0: Tagged::closed_form(t0),
                c_set: (Tagged::closed_form(m.c_set.0), Tagged::closed_form(m.c_set.1)),
                interval: Some((Tagged::closed_form(m.nu_support.0), Tagged::closed_form(m.nu_support.1))),
                log_alpha: Tagged::closed_form(m.log_alpha),
                log_alpha_literal: Some(Tagged::closed_form(m.log_alpha_literal)),
                nu_mass: Some(Tagged::closed_form(m.nu_mass)),
                replay_violations: None,
                cells: None,
                dt: None,
            })
        }
        Err(e) => s.fail("minorise", &e),
    }
    if last == Stage::Minorise {
        return None;
    }
    match selfsim_certificate(b, t0) {
        Ok(c) => {
            s.gate("rho_certificate > 0", c.harris.rho.is_positive());
            s.certify = Some(CertifyStage::from_certificate(&c.harris, Provenance::PaperClosedForm));
            Some(c.harris)
        }
        Err(e) => {
            s.fail("certify", &e);
            None
        }
    }
}

fn simulated_chain(
    s: &mut PipelineSummary,
    cfg: &RunConfig,
    model: &Model,
    data: &EigenData,
    t0: f64,
    last: Stage,
) -> Option<HarrisCertificate> {
    let drift = match drift_certificate(cfg, model, data.lambda, &data.phi) {
        Ok(d) => d,
        Err(e) => {
            s.fail("drift", &e);
            return None;
        }
    };
    let mut drift_stage = drift_stage_from(&drift, t0);
    if last == Stage::Drift {
        // Checked on the evolution grid; full runs use the small-set grid.
        let phi: Vec<f64> = data.grid.nodes().iter().map(|&x| data.phi.eval(x)).collect();
        let setup = DriftCheckSetup {
            grid: &data.grid,
            coeffs: &model.coeffs,
            kernel: model.kernel,
            lambda: data.lambda,
            phi: &phi,
            dt: Some(data.dt),
        };
        record_drift_check(
            s,
            &mut drift_stage,
            verify_drift(&drift, &setup, t0, cfg.certificate.drift_trials, cfg.seed),
        );
        s.drift = Some(drift_stage);
        return None;
    }
    let gamma = drift.gamma(t0);
    let r = cfg.certificate.r.unwrap_or(4.0 * drift.k_d / (1.0 - gamma));
    let chain = (|| -> Result<(SmallSetGrid, crate::minorisation::SmallSetCertificate, usize)> {
        let hull = small_set_hull(&drift, &data.phi, r)?;
        let sg = small_set_grid(cfg, model, data.lambda, &data.phi, hull)?;
        let setup = MinorisationSetup {
            grid: &sg.grid,
            coeffs: &model.coeffs,
            kernel: model.kernel,
            lambda: data.lambda,
            phi: &sg.phi,
            dt: Some(sg.dt),
        };
        let v = drift.weight_on_grid(&sg.grid, &sg.phi);
        let small = small_set_constants(&setup, &v, r, t0, cfg.certificate.probes, cfg.certificate.nu_shape)?;
        let violations = replay(&setup, &small)?;
        Ok((sg, small, violations))
    })();
    let (sg, small, violations) = match chain {
        Ok(c) => c,
        Err(Error::EmptyInterval(m)) if model.kernel == FragmentKernel::EqualMitosis => {
            s.drift = Some(drift_stage);
            let hint = format!("{m}; the mitosis interval opens for larger certificate.t0");
            s.fail("minorise", &Error::EmptyInterval(hint));
            return None;
        }
        Err(e) => {
            s.drift = Some(drift_stage);
            s.fail("minorise", &e);
            return None;
        }
    };
    let check = verify_drift(
        &drift,
        &DriftCheckSetup {
            grid: &sg.grid,
            coeffs: &model.coeffs,
            kernel: model.kernel,
            lambda: data.lambda,
            phi: &sg.phi,
            dt: Some(sg.dt),
        },
        t0,
        cfg.certificate.drift_trials,
        cfg.seed,
    );
    record_drift_check(s, &mut drift_stage, check);
    s.drift = Some(drift_stage);
    s.gate("minorisation replay", violations == 0);
    s.minorise = Some(MinoriseStage {
        source: Provenance::Simulated,
        r: Tagged::simulated(r),
        t0: Tagged::closed_form(t0),
        c_set: (Tagged::simulated(small.c_set.0), Tagged::simulated(small.c_set.1)),
        interval: Some((Tagged::simulated(small.interval.0), Tagged::simulated(small.interval.1))),
        log_alpha: Tagged::simulated(small.log_alpha),
        log_alpha_literal: None,
        nu_mass: Some(Tagged::simulated(small.nu.iter().sum())),
        replay_violations: Some(Tagged::simulated(violations as f64)),
        cells: Some(Tagged::simulated(small.cells as f64)),
        dt: Some(Tagged::simulated(small.dt)),
    });
    if last == Stage::Minorise {
        return None;
    }
    match harris_rate(gamma, drift.k_d, t0, LogReal::from_ln(small.log_alpha), r, HarrisChoices::default()) {
        Ok(c) => {
            s.gate("rho_certificate > 0", c.rho.is_positive());
            s.certify = Some(CertifyStage::from_certificate(&c, Provenance::Simulated));
            Some(c)
        }
        Err(e) => {
            s.fail("certify", &e);
            None
        }
    }
}

fn record_drift_check(s: &mut PipelineSummary, stage: &mut DriftStage, check: Result<crate::lyapunov::DriftReport>) {
    match check {
        Ok(rep) => {
            s.gate("drift inequality on evolved states", rep.passed());
            stage.verification = Some(DriftVerification {
                trials: Tagged::simulated(rep.trials as f64),
                violations: Tagged::simulated(rep.violations.len() as f64),
                worst_ratio: Tagged::simulated(rep.worst_ratio),
                dt: Tagged::simulated(rep.dt),
            });
        }
        Err(e) => s.fail("drift", &e),
    }
}

/// Initial bump on a grid, for the `evolve` command.
pub fn initial_bump(grid: &Arc<Grid>, center: f64, width: f64) -> GridMeasure {
    gaussian_bump(grid, center, width)
}
