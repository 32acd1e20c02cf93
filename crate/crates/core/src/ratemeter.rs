//! Empirical decay rate of `‖m_t − (∫φ n₀) N‖_V` and its comparison with a
//! certified rate.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{Grid, GridMeasure, WeightSpec};
use crate::eigen::{cell_average_phi, EigenTriple};
use crate::error::{Error, Result};
use crate::harris::HarrisCertificate;
use crate::model::{Coefficients, FragmentKernel};
use crate::semigroup::{EvolutionConfig, Evolver};

/// Evolution inputs. `triple.n` should be the stationary profile of the same
/// discrete operator (see [`crate::direct_eigen`]).
pub struct RateSetup<'a> {
    pub grid: &'a Arc<Grid>,
    pub coeffs: &'a Coefficients,
    pub kernel: FragmentKernel,
    pub triple: &'a EigenTriple,
    pub dt: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct RateOptions {
    pub t_end: f64,
    /// Spacing of the recorded samples; rounded to whole steps.
    pub sample_dt: f64,
    pub min_snapshots: usize,
    pub r2_min: f64,
    /// Amplitude of the detrended log residual, as a fraction of the fitted
    /// log-decay over the window, above which a periodic pattern counts as
    /// an oscillation.
    pub oscillation_amplitude: f64,
    /// Samples from the first one below `floor · ‖c N‖_V` on are dropped.
    pub floor: f64,
}

impl RateOptions {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            sample_dt: t_end / 300.0,
            min_snapshots: 10,
            r2_min: 0.98,
            oscillation_amplitude: 0.1,
            floor: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rho_emp: f64,
    pub fit_window: (f64, f64),
    pub r_squared: f64,
    pub snapshots: usize,
    pub initial: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Rejection {
    AlreadyStationary { relative_distance: f64 },
    Oscillation { log_amplitude: f64, relative_amplitude: f64, period: f64, r_squared: f64 },
    PoorFit { r_squared: f64, slope: f64 },
    NoDecay { slope: f64 },
    TooFewSnapshots { available: usize, needed: usize },
}

impl Rejection {
    pub fn diagnostic(&self) -> String {
        match self {
            Rejection::AlreadyStationary { relative_distance } => {
                format!("already stationary: d(0)/|cN|_V = {relative_distance:.3e}")
            }
            Rejection::Oscillation { log_amplitude, relative_amplitude, period, .. } => format!(
                "oscillation: detrended log-residual amplitude {log_amplitude:.3e} \
                 ({relative_amplitude:.3e} of the fitted log-decay) with dominant period {period:.4}"
            ),
            Rejection::PoorFit { r_squared, .. } => format!("poor exponential fit: r^2 = {r_squared:.4}"),
            Rejection::NoDecay { slope } => format!("no decay: fitted slope {slope:.4e} >= 0"),
            Rejection::TooFewSnapshots { available, needed } => {
                format!("only {available} usable snapshots in the fit window, need {needed}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RateOutcome {
    Fitted(RateFit),
    Rejected(Rejection),
}

impl RateOutcome {
    pub fn fit(&self) -> Option<&RateFit> {
        match self {
            RateOutcome::Fitted(f) => Some(f),
            RateOutcome::Rejected(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RateMeasurement {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// `‖c N‖_V`.
    pub scale: f64,
    pub outcome: RateOutcome,
}

impl RateMeasurement {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,d")?;
        for (t, d) in self.times.iter().zip(&self.distances) {
            writeln!(w, "{t},{d}")?;
        }
        Ok(())
    }
}

/// Log-residual amplitudes below this are rounding noise.
const OSCILLATION_NOISE: f64 = 1e-9;

/// Normal density bump, restricted to the grid.
pub fn gaussian_bump(grid: &Arc<Grid>, center: f64, sd: f64) -> GridMeasure {
    GridMeasure::from_density(grid, |x| (-0.5 * ((x - center) / sd).powi(2)).exp())
}

/// Evolves `φ n₀` conservatively and fits `ln d(t)` on `[T/3, T]`.
pub fn measure_rate(
    setup: &RateSetup,
    n0: &GridMeasure,
    initial: &str,
    v: &WeightSpec,
    opts: &RateOptions,
) -> Result<RateMeasurement> {
    let grid = setup.grid;
    let triple = setup.triple;
    if triple.phi.len() != grid.len() || triple.n.mass.len() != grid.len() || n0.mass.len() != grid.len() {
        return Err(Error::Domain("initial datum and eigen triple must live on the rate grid".into()));
    }
    if !(opts.t_end > 0.0 && opts.sample_dt > 0.0) {
        return Err(Error::Domain("need T > 0 and a positive sample spacing".into()));
    }
    let phi_bar = cell_average_phi(grid, &triple.phi);
    let f0: Vec<f64> = n0.mass.iter().zip(&phi_bar).map(|(m, p)| m * p).collect();
    let total: f64 = f0.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("initial datum has no phi-mass".into()));
    }
    let stationary_pairing: f64 = triple.n.mass.iter().zip(&phi_bar).map(|(m, p)| m * p).sum();
    let c = total / stationary_pairing;
    let target: Vec<f64> = triple.n.mass.iter().map(|m| c * m).collect();
    let weights = v.on_grid(grid);
    let scale: f64 = target.iter().zip(&weights).map(|(m, w)| m.abs() * w).sum();
    let distance = |f: &[f64]| -> f64 {
        f.iter().zip(&phi_bar).zip(target.iter().zip(&weights)).map(|((f, p), (t, w))| w * (f / p - t).abs()).sum()
    };

    let ev = Evolver::new(
        grid,
        setup.coeffs,
        setup.kernel,
        EvolutionConfig::conservative(setup.dt, triple.lambda, triple.phi.clone()),
    )?;
    let stride = ((opts.sample_dt / setup.dt).round() as usize).max(1);
    let steps = ev.steps_for(opts.t_end);
    let mut state = GridMeasure::from_masses(grid, f0)?;
    let mut times = vec![0.0];
    let mut distances = vec![distance(&state.mass)];
    for k in 1..=steps {
        state = ev.step(&state);
        if k % stride == 0 || k == steps {
            times.push(k as f64 * setup.dt);
            distances.push(distance(&state.mass));
        }
    }

    let outcome = classify(&times, &distances, scale, initial, opts);
    Ok(RateMeasurement { times, distances, scale, outcome })
}

fn classify(times: &[f64], d: &[f64], scale: f64, initial: &str, opts: &RateOptions) -> RateOutcome {
    let rel0 = d[0] / scale;
    if rel0 < 1e-9 {
        return RateOutcome::Rejected(Rejection::AlreadyStationary { relative_distance: rel0 });
    }
    let t_end = *times.last().unwrap_or(&0.0);
    let t_a = t_end / 3.0;
    let floor = opts.floor * scale;
    // The decay is cut at the first sample under the floor: below it the
    // distance crosses over to the discretisation plateau.
    let clean = d.iter().position(|&d| d <= floor).unwrap_or(d.len());
    let (t, y): (Vec<f64>, Vec<f64>) =
        times[..clean].iter().zip(&d[..clean]).filter(|(&t, _)| t >= t_a - 1e-12).map(|(&t, &d)| (t, d.ln())).unzip();
    if t.len() < opts.min_snapshots {
        return RateOutcome::Rejected(Rejection::TooFewSnapshots { available: t.len(), needed: opts.min_snapshots });
    }
    let (slope, intercept, r2) = least_squares(&t, &y);
    let resid: Vec<f64> = t.iter().zip(&y).map(|(t, y)| y - (intercept + slope * t)).collect();
    let (lo, hi) = resid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| (l.min(r), h.max(r)));
    let amplitude = 0.5 * (hi - lo);
    // Measured against the log-decay the trend accounts for over the window,
    // so a ripple on a flat (non-decaying) signal always counts.
    let decay = (slope * (t[t.len() - 1] - t[0])).abs();
    let relative = amplitude / decay.max(1e-300);
    if amplitude > OSCILLATION_NOISE && relative > opts.oscillation_amplitude {
        if let Some(period) = dominant_period(&resid, t[1] - t[0]) {
            return RateOutcome::Rejected(Rejection::Oscillation {
                log_amplitude: amplitude,
                relative_amplitude: relative,
                period,
                r_squared: r2,
            });
        }
    }
    if r2 < opts.r2_min {
        return RateOutcome::Rejected(Rejection::PoorFit { r_squared: r2, slope });
    }
    if slope >= 0.0 {
        return RateOutcome::Rejected(Rejection::NoDecay { slope });
    }
    RateOutcome::Fitted(RateFit {
        rho_emp: -slope,
        fit_window: (t[0], t[t.len() - 1]),
        r_squared: r2,
        snapshots: t.len(),
        initial: initial.to_string(),
    })
}

/// `(slope, intercept, r²)` of the least-squares line through `(x, y)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = y.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Period of the strongest discrete Fourier mode of `r` (sample spacing
/// `dt`) if that mode and its two neighbours carry at least half the
/// non-constant power and the window holds at least two cycles.
pub fn dominant_period(r: &[f64], dt: f64) -> Option<f64> {
    let m = r.len();
    if m < 8 {
        return None;
    }
    let power: Vec<f64> = (0..=m / 2)
        .map(|j| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, v) in r.iter().enumerate() {
                let a = 2.0 * PI * (j * k) as f64 / m as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            re * re + im * im
        })
        .collect();
    let total: f64 = power[1..].iter().sum();
    if total <= 0.0 {
        return None;
    }
    let (jstar, _) =
        power
            .iter()
            .enumerate()
            .skip(1)
            .fold((1, f64::NEG_INFINITY), |best, (j, &p)| if p > best.1 { (j, p) } else { best });
    let near: f64 = power[(jstar - 1).max(1)..=(jstar + 1).min(m / 2)].iter().sum();
    (jstar >= 2 && near >= 0.5 * total).then(|| m as f64 * dt / jstar as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonVerdict {
    /// `ρ_emp ≥ ρ_cert`.
    LowerBoundHolds,
    LowerBoundViolated,
    /// No certificate and the fit was rejected.
    ConsistentlyNoGap,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    pub verdict: ComparisonVerdict,
    /// `ln ρ_emp − ln ρ_cert` in nats.
    pub log_gap: Option<f64>,
}

pub fn rate_vs_certificate(outcome: &RateOutcome, cert: Option<&HarrisCertificate>) -> RateComparison {
    match (outcome.fit(), cert) {
        (Some(fit), Some(cert)) => {
            let log_gap = fit.rho_emp.ln() - cert.rho.ln;
            let verdict = if cert.rho.sign <= 0 || log_gap >= 0.0 {
                ComparisonVerdict::LowerBoundHolds
            } else {
                ComparisonVerdict::LowerBoundViolated
            };
            RateComparison { verdict, log_gap: Some(log_gap) }
        }
        (None, None) => RateComparison { verdict: ComparisonVerdict::ConsistentlyNoGap, log_gap: None },
        _ => RateComparison { verdict: ComparisonVerdict::Inconclusive, log_gap: None },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_slope() {
        let t: Vec<f64> = (0..30).map(|k| k as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 - 0.7 * t).collect();
        let (s, i, r2) = least_squares(&t, &y);
        assert!((s + 0.7).abs() < 1e-12 && (i - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_residual_is_detected() {
        let dt = 0.05;
        let r: Vec<f64> = (0..200).map(|k| (2.0 * PI * k as f64 * dt / 2f64.ln()).sin()).collect();
        let p = dominant_period(&r, dt).unwrap();
        assert!((p - 2f64.ln()).abs() < 0.05, "{p}");
    }
}
