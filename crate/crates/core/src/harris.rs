//! Doeblin and Harris constants, the self-similar certificate chain, and a
//! brute-force finite-chain oracle for the Doeblin and Harris bounds.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::selfsim_drift_constant;
use crate::minorisation::selfsim_small_set;

/// A real number stored as a sign and the log of its magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogReal {
    /// `-1`, `0` or `1`.
    pub sign: i8,
    /// `ln |x|`; `-inf` for zero.
    pub ln: f64,
}

// Consuming arithmetic methods rather than operator traits, so call sites read as log-domain steps.
#[allow(clippy::should_implement_trait)]
impl LogReal {
    pub const ZERO: LogReal = LogReal { sign: 0, ln: f64::NEG_INFINITY };
    pub const ONE: LogReal = LogReal { sign: 1, ln: 0.0 };

    pub fn new(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            LogReal { sign: if x > 0.0 { 1 } else { -1 }, ln: x.abs().ln() }
        }
    }

    /// The positive number `e^{ln}`.
    pub fn from_ln(ln: f64) -> Self {
        if ln == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            LogReal { sign: 1, ln }
        }
    }

    /// Nearest `f64`; underflows to zero and overflows to infinity.
    pub fn to_f64(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * self.ln.exp(),
        }
    }

    pub fn is_positive(self) -> bool {
        self.sign > 0
    }

    pub fn neg(self) -> Self {
        LogReal { sign: -self.sign, ln: self.ln }
    }

    pub fn mul(self, o: Self) -> Self {
        if self.sign == 0 || o.sign == 0 {
            return Self::ZERO;
        }
        LogReal { sign: self.sign * o.sign, ln: self.ln + o.ln }
    }

    pub fn div(self, o: Self) -> Self {
        assert!(o.sign != 0, "LogReal division by zero");
        if self.sign == 0 {
            return Self::ZERO;
        }
        LogReal { sign: self.sign * o.sign, ln: self.ln - o.ln }
    }

    pub fn scale(self, c: f64) -> Self {
        self.mul(Self::new(c))
    }

    /// `|x|^p` for a positive value.
    pub fn powf(self, p: f64) -> Self {
        assert!(self.sign > 0, "LogReal powf needs a positive base");
        LogReal { sign: 1, ln: self.ln * p }
    }

    pub fn add(self, o: Self) -> Self {
        if self.sign == 0 {
            return o;
        }
        if o.sign == 0 {
            return self;
        }
        let (big, small) = if self.ln >= o.ln { (self, o) } else { (o, self) };
        let d = (small.ln - big.ln).exp();
        if big.sign == small.sign {
            LogReal { sign: big.sign, ln: big.ln + d.ln_1p() }
        } else if d == 1.0 {
            Self::ZERO
        } else {
            LogReal { sign: big.sign, ln: big.ln + (-d).ln_1p() }
        }
    }

    pub fn sub(self, o: Self) -> Self {
        self.add(o.neg())
    }

    pub fn min(self, o: Self) -> Self {
        if self.total_cmp(&o) == Ordering::Greater {
            o
        } else {
            self
        }
    }

    pub fn max(self, o: Self) -> Self {
        if self.total_cmp(&o) == Ordering::Less {
            o
        } else {
            self
        }
    }

    pub fn total_cmp(&self, o: &Self) -> Ordering {
        match self.sign.cmp(&o.sign) {
            Ordering::Equal => match self.sign {
                0 => Ordering::Equal,
                1 => self.ln.total_cmp(&o.ln),
                _ => o.ln.total_cmp(&self.ln),
            },
            ord => ord,
        }
    }

    /// `-ln(1 - x)` for `0 ≤ x < 1`, accurate for tiny `x`.
    pub fn neg_log1m(self) -> Self {
        assert!(self.sign >= 0 && self.ln < 0.0, "neg_log1m needs 0 <= x < 1");
        if self.sign == 0 {
            return Self::ZERO;
        }
        if self.ln > -700.0 {
            Self::new(-(-self.ln.exp()).ln_1p())
        } else {
            // -ln(1-x) = x (1 + x/2 + ...) and x < 1e-304 here.
            self
        }
    }
}

impl fmt::Display for LogReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            0 => write!(f, "0"),
            s => write!(f, "{}exp({})", if s < 0 { "-" } else { "" }, self.ln),
        }
    }
}

/// `(C, ρ)` with `C = 1/(1−α)` and `ρ = −ln(1−α)/t₀`.
pub fn doeblin_rate(alpha: f64, t0: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("Doeblin needs 0 < alpha < 1, got {alpha}")));
    }
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::Domain(format!("t0 must be positive, got {t0}")));
    }
    Ok((1.0 / (1.0 - alpha), -(-alpha).ln_1p() / t0))
}

/// Optional overrides for [`harris_rate`].
#[derive(Clone, Copy, Debug, Default)]
pub struct HarrisChoices {
    pub alpha0: Option<LogReal>,
    pub gamma0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarrisCertificate {
    pub gamma: f64,
    pub k_d: f64,
    pub t0: f64,
    pub alpha: LogReal,
    pub r: f64,
    pub alpha0: LogReal,
    pub gamma0: f64,
    pub beta: LogReal,
    /// `ε = 1 − ᾱ`.
    pub epsilon: LogReal,
    /// `ln C = −ln ᾱ`.
    pub log_c: LogReal,
    pub rho: LogReal,
}

impl HarrisCertificate {
    /// `ᾱ` as a double; rounds to 1 when `ε` is below machine precision.
    pub fn alpha_bar(&self) -> f64 {
        1.0 - self.epsilon.to_f64()
    }

    pub fn c(&self) -> f64 {
        self.log_c.to_f64().exp()
    }
}

/// Harris constants from drift `(γ, K)`, small set `{V ≤ R}` with
/// minorisation `α`, and the choices `α₀ ∈ (0, α)`, `γ₀ ∈ [γ + 2K/R, 1)`.
pub fn harris_rate(
    gamma: f64,
    k_d: f64,
    t0: f64,
    alpha: LogReal,
    r: f64,
    choices: HarrisChoices,
) -> Result<HarrisCertificate> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Constraint(format!("0 < gamma < 1 fails: gamma = {gamma}")));
    }
    if !(k_d > 0.0 && k_d.is_finite()) {
        return Err(Error::Constraint(format!("K_d > 0 fails: K_d = {k_d}")));
    }
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::Constraint(format!("t0 > 0 fails: t0 = {t0}")));
    }
    if !(alpha.is_positive() && alpha.ln < 0.0) {
        return Err(Error::Constraint(format!("0 < alpha < 1 fails: alpha = {alpha}")));
    }
    if !(r > 2.0 * k_d / (1.0 - gamma)) {
        return Err(Error::Constraint(format!(
            "R > 2K_d/(1-gamma) fails: R = {r}, 2K_d/(1-gamma) = {}",
            2.0 * k_d / (1.0 - gamma)
        )));
    }
    let floor = gamma + 2.0 * k_d / r;
    let gamma0 = choices.gamma0.unwrap_or(floor);
    if !(gamma0 >= floor && gamma0 < 1.0) {
        return Err(Error::Constraint(format!(
            "gamma + 2K_d/R <= gamma0 < 1 fails: gamma0 = {gamma0}, gamma + 2K_d/R = {floor}"
        )));
    }
    // With the default α₀ = α/2, α − α₀ = α/2 exactly; subtracting in the log
    // domain would cancel once ln α is too large for ln 2 to register.
    let (alpha0, first) = match choices.alpha0 {
        None => (alpha.scale(0.5), alpha.scale(0.5)),
        Some(a0) => {
            if !(a0.is_positive() && a0.total_cmp(&alpha) == Ordering::Less) {
                return Err(Error::Constraint(format!("0 < alpha0 < alpha fails: alpha0 = {a0}, alpha = {alpha}")));
            }
            (a0, alpha.sub(a0))
        }
    };
    let beta = alpha0.scale(1.0 / k_d);
    let r_beta = beta.scale(r);
    // 1 − max{1 − α + α₀, (2 + Rβγ₀)/(2 + Rβ)} = min{α − α₀, Rβ(1 − γ₀)/(2 + Rβ)}
    let second = r_beta.scale(1.0 - gamma0).div(r_beta.add(LogReal::new(2.0)));
    let epsilon = first.min(second);
    let log_c = epsilon.neg_log1m();
    let rho = log_c.scale(1.0 / t0);
    Ok(HarrisCertificate { gamma, k_d, t0, alpha, r, alpha0, gamma0, beta, epsilon, log_c, rho })
}

/// The self-similar chain for `g = x`, `B = x^b`, uniform kernel, `V = 1 + x²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarCertificate {
    pub b: f64,
    pub harris: HarrisCertificate,
    /// `ln α` with the `R^γ` exponent read literally.
    pub log_alpha_literal: f64,
}

pub fn selfsim_certificate(b: f64, t0: f64) -> Result<SelfSimilarCertificate> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("b must be positive, got {b}")));
    }
    let gamma = (-t0 / 2.0).exp();
    let k_d = selfsim_drift_constant(b);
    let r = 4.0 * k_d / (1.0 - gamma);
    let small = selfsim_small_set(b, t0, r)?;
    let harris = harris_rate(gamma, k_d, t0, LogReal::from_ln(small.log_alpha), r, HarrisChoices::default())?;
    Ok(SelfSimilarCertificate { b, harris, log_alpha_literal: small.log_alpha_literal })
}

/// Inputs for the Harris half of [`finite_chain_oracle`].
#[derive(Clone, Debug)]
pub struct HarrisOracleInput {
    pub v: Vec<f64>,
    pub gamma: f64,
    pub k_d: f64,
    pub r: f64,
    pub alpha: f64,
    pub nu: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct OracleParams {
    pub pairs: usize,
    pub max_power: usize,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { pairs: 1000, max_power: 10, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarrisOracleReport {
    pub alpha_bar: f64,
    pub beta: f64,
    /// Largest observed `‖(μ₁−μ₂)P‖ / ‖μ₁−μ₂‖` over random pairs.
    pub worst_random: f64,
    /// Exact operator norm on zero-mass measures (max over Dirac pairs).
    pub worst_exact: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n: usize,
    pub alpha_star: f64,
    pub doeblin_failure: bool,
    pub pairs: usize,
    /// Largest `‖P^k μ‖ / ((1−α*)^k ‖μ‖)` over pairs and powers, skipping
    /// bounds within rounding of zero.
    pub doeblin_worst_ratio: f64,
    pub doeblin_violations: usize,
    pub harris: Option<HarrisOracleReport>,
}

impl OracleReport {
    pub fn violations(&self) -> usize {
        self.doeblin_violations + self.harris.as_ref().map_or(0, |h| h.violations)
    }
}

const ORACLE_SLACK: f64 = 1e-12;
/// Absolute floor on the probability scale `‖μ₁‖ + ‖μ₂‖ = 2`: rounding
/// leaves `μ₁ − μ₂` with a mass of order 1e−17 that `P` never contracts.
const ORACLE_FLOOR: f64 = 1e-14;

fn check_stochastic(p: &[Vec<f64>]) -> Result<usize> {
    let n = p.len();
    if n == 0 || n > 12 {
        return Err(Error::Oracle(format!("need 1 <= n <= 12 states, got {n}")));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Oracle(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if row.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Oracle(format!("row {i} has a negative or NaN entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Oracle(format!("row {i} sums to {s}")));
        }
    }
    Ok(n)
}

/// `α* = Σ_j min_{i∈rows} P_ij`.
pub fn maximal_minorisation(p: &[Vec<f64>], rows: &[usize]) -> f64 {
    let n = p.first().map_or(0, Vec::len);
    (0..n).map(|j| rows.iter().map(|&i| p[i][j]).fold(f64::INFINITY, f64::min)).sum()
}

fn step(mu: &[f64], p: &[Vec<f64>]) -> Vec<f64> {
    let n = mu.len();
    let mut out = vec![0.0; n];
    for (i, &m) in mu.iter().enumerate() {
        if m != 0.0 {
            for j in 0..n {
                out[j] += m * p[i][j];
            }
        }
    }
    out
}

fn weighted_norm(mu: &[f64], w: &[f64]) -> f64 {
    mu.iter().zip(w).map(|(m, w)| m.abs() * w).sum()
}

/// A random difference of two probability vectors; sparse half the time.
fn random_pair(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let draw = |rng: &mut ChaCha8Rng| {
        let sparse = rng.random_bool(0.5);
        let mut p: Vec<f64> = (0..n)
            .map(|_| if sparse && rng.random_bool(0.7) { 0.0 } else { -rng.random::<f64>().max(1e-300).ln() })
            .collect();
        if p.iter().all(|&x| x == 0.0) {
            p[rng.random_range(0..n)] = 1.0;
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        p
    };
    let a = draw(rng);
    let b = draw(rng);
    a.iter().zip(&b).map(|(x, y)| x - y).collect()
}

/// Checks the Doeblin factor `(1−α*)^k` for `k = 1..max_power` and, given
/// drift and small-set data, the one-step Harris contraction in
/// `‖μ‖_{V,β} = Σ (1 + βV)|μ|`.
pub fn finite_chain_oracle(
    p: &[Vec<f64>],
    harris: Option<&HarrisOracleInput>,
    params: OracleParams,
) -> Result<OracleReport> {
    let n = check_stochastic(p)?;
    let all: Vec<usize> = (0..n).collect();
    let alpha_star = maximal_minorisation(p, &all).clamp(0.0, 1.0);
    let ones = vec![1.0; n];

    let doeblin: Vec<(f64, usize)> = (0..params.pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(k as u64));
            let mut mu = random_pair(n, &mut rng);
            let norm0 = weighted_norm(&mu, &ones);
            let (mut worst, mut bad) = (0.0f64, 0usize);
            if norm0 == 0.0 {
                return (worst, bad);
            }
            for power in 1..=params.max_power {
                mu = step(&mu, p);
                let bound = (1.0 - alpha_star).powi(power as i32) * norm0;
                let got = weighted_norm(&mu, &ones);
                if got > bound * (1.0 + ORACLE_SLACK) + ORACLE_FLOOR {
                    bad += 1;
                }
                if bound > 1e4 * ORACLE_FLOOR {
                    worst = worst.max(got / bound);
                }
            }
            (worst, bad)
        })
        .collect();
    let doeblin_worst_ratio = doeblin.iter().map(|d| d.0).fold(0.0, f64::max);
    let doeblin_violations = doeblin.iter().map(|d| d.1).sum();

    let harris = harris.map(|h| harris_check(p, h, params)).transpose()?;
    Ok(OracleReport {
        n,
        alpha_star,
        doeblin_failure: alpha_star <= 0.0,
        pairs: params.pairs,
        doeblin_worst_ratio,
        doeblin_violations,
        harris,
    })
}

fn harris_check(p: &[Vec<f64>], h: &HarrisOracleInput, params: OracleParams) -> Result<HarrisOracleReport> {
    let n = p.len();
    if h.v.len() != n || h.nu.len() != n {
        return Err(Error::Oracle("V and nu must have one entry per state".into()));
    }
    if h.v.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Oracle("V must be non-negative".into()));
    }
    let pv = step_dual(p, &h.v);
    for (i, (&pvi, &vi)) in pv.iter().zip(&h.v).enumerate() {
        if pvi > h.gamma * vi + h.k_d + 1e-12 * (1.0 + pvi) {
            return Err(Error::Oracle(format!(
                "drift fails at state {i}: (PV)_i = {pvi} > gamma V_i + K_d = {}",
                h.gamma * vi + h.k_d
            )));
        }
    }
    if (h.nu.iter().sum::<f64>() - 1.0).abs() > 1e-12 || h.nu.iter().any(|&x| x < 0.0) {
        return Err(Error::Oracle("nu must be a probability vector".into()));
    }
    for i in (0..n).filter(|&i| h.v[i] <= h.r) {
        for (j, (&pij, &nuj)) in p[i].iter().zip(&h.nu).enumerate() {
            if pij < h.alpha * nuj - 1e-15 {
                return Err(Error::Oracle(format!(
                    "minorisation fails: P[{i}][{j}] = {pij} < alpha nu_j = {}",
                    h.alpha * nuj
                )));
            }
        }
    }
    let cert = harris_rate(h.gamma, h.k_d, 1.0, LogReal::new(h.alpha), h.r, HarrisChoices::default())?;
    let alpha_bar = cert.alpha_bar();
    let beta = cert.beta.to_f64();
    let w: Vec<f64> = h.v.iter().map(|v| 1.0 + beta * v).collect();
    let w_max = w.iter().copied().fold(1.0, f64::max);
    let over = |got: f64, norm: f64| got > alpha_bar * norm * (1.0 + ORACLE_SLACK) + ORACLE_FLOOR * w_max;

    let mut worst_exact = 0.0f64;
    let mut violations = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d: Vec<f64> = p[i].iter().zip(&p[j]).map(|(a, b)| a - b).collect();
            let (got, norm) = (weighted_norm(&d, &w), w[i] + w[j]);
            worst_exact = worst_exact.max(got / norm);
            violations += usize::from(over(got, norm));
        }
    }
    let random: Vec<(f64, usize)> = (0..params.pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(0x9e37_79b9).wrapping_add(k as u64));
            let mu = random_pair(n, &mut rng);
            let norm = weighted_norm(&mu, &w);
            if norm == 0.0 {
                return (0.0, 0);
            }
            let got = weighted_norm(&step(&mu, p), &w);
            (got / norm, usize::from(over(got, norm)))
        })
        .collect();
    Ok(HarrisOracleReport {
        alpha_bar,
        beta,
        worst_random: random.iter().map(|r| r.0).fold(0.0, f64::max),
        worst_exact,
        violations: violations + random.iter().map(|r| r.1).sum::<usize>(),
    })
}

/// `(PV)_i = Σ_j P_ij V_j`.
fn step_dual(p: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    p.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Harris inputs for a chain and weight: `K_d = max_i (PV − γV)_i⁺` (at least
/// `1e-3`), `R = 4K_d/(1−γ)`, and the maximal minorisation on `{V ≤ R}`.
/// `None` when the small set is empty or admits no minorisation.
pub fn harris_inputs_for(p: &[Vec<f64>], v: &[f64], gamma: f64) -> Option<HarrisOracleInput> {
    let n = p.len();
    let pv = step_dual(p, v);
    let k_d = (0..n).map(|i| pv[i] - gamma * v[i]).fold(1e-3, f64::max);
    let r = 4.0 * k_d / (1.0 - gamma);
    let rows: Vec<usize> = (0..n).filter(|&i| v[i] <= r).collect();
    if rows.is_empty() {
        return None;
    }
    let mins: Vec<f64> = (0..n).map(|j| rows.iter().map(|&i| p[i][j]).fold(f64::INFINITY, f64::min)).collect();
    let total: f64 = mins.iter().sum();
    if total <= 1e-12 {
        return None;
    }
    let nu = mins.iter().map(|m| m / total).collect();
    // α must stay below 1; a smaller α is still a valid minorisation.
    let alpha = total.min(1.0 - 1e-9);
    Some(HarrisOracleInput { v: v.to_vec(), gamma, k_d, r, alpha, nu })
}

/// A random row-stochastic matrix; rows mix dense and sparse supports.
pub fn random_chain(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let sparse = rng.random_bool(0.3);
            let mut row: Vec<f64> =
                (0..n).map(|_| if sparse && rng.random_bool(0.6) { 0.0 } else { rng.random::<f64>() }).collect();
            if row.iter().all(|&x| x == 0.0) {
                row[rng.random_range(0..n)] = 1.0;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            row
        })
        .collect()
}

/// Summary of a randomized oracle sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSuite {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub chains_with_harris: usize,
    pub doeblin_failures: usize,
    pub doeblin_violations: usize,
    pub harris_violations: usize,
    pub worst_doeblin_ratio: f64,
    pub worst_harris_factor_over_bound: f64,
}

/// `trials` random `n`-state chains, each checked with
/// `pairs_per_chain` random pairs and `V_i = 1 + random·10^{...}`.
pub fn oracle_suite(n: usize, trials: usize, pairs_per_chain: usize, seed: u64) -> Result<OracleSuite> {
    if n == 0 || n > 12 {
        return Err(Error::Oracle(format!("need 1 <= n <= 12 states, got {n}")));
    }
    let reports: Vec<OracleReport> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(t as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let p = random_chain(n, &mut rng);
            let v: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-1.0..3.0))).collect();
            let gamma = rng.random_range(0.1..0.9);
            let h = harris_inputs_for(&p, &v, gamma);
            finite_chain_oracle(&p, h.as_ref(), OracleParams { pairs: pairs_per_chain, max_power: 10, seed: s })
        })
        .collect::<Result<_>>()?;
    let ratio = |r: &OracleReport| r.harris.as_ref().map_or(0.0, |h| h.worst_exact.max(h.worst_random) / h.alpha_bar);
    Ok(OracleSuite {
        n,
        trials,
        seed,
        chains_with_harris: reports.iter().filter(|r| r.harris.is_some()).count(),
        doeblin_failures: reports.iter().filter(|r| r.doeblin_failure).count(),
        doeblin_violations: reports.iter().map(|r| r.doeblin_violations).sum(),
        harris_violations: reports.iter().map(|r| r.harris.as_ref().map_or(0, |h| h.violations)).sum(),
        worst_doeblin_ratio: reports.iter().map(|r| r.doeblin_worst_ratio).fold(0.0, f64::max),
        worst_harris_factor_over_bound: reports.iter().map(ratio).fold(0.0, f64::max),
    })
}
