//! Coefficients, fragment kernels and the admissibility checks on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Sampled positive function, interpolated piecewise linearly in log-log
/// coordinates and extended by the power laws of its end segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table {
    /// `allow_zero` admits vanishing samples (for fragmentation rates); such
    /// segments fall back to linear interpolation.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, allow_zero: bool) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidCoefficients("a table needs at least two (x, y) samples of equal length".into()));
        }
        if xs.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidCoefficients("table abscissae must be positive".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCoefficients("table abscissae must be strictly increasing".into()));
        }
        for &y in &ys {
            let ok = if allow_zero { y >= 0.0 } else { y > 0.0 };
            if !ok || !y.is_finite() {
                return Err(Error::InvalidCoefficients(format!("inadmissible table value {y}")));
            }
        }
        Ok(Self { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    /// Log-log slope of segment `i`, when both ends are positive.
    pub fn segment_slope(&self, i: usize) -> Option<f64> {
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        (y0 > 0.0 && y1 > 0.0).then(|| (y1 / y0).ln() / (self.xs[i + 1] / self.xs[i]).ln())
    }

    pub fn segment_count(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (x0, x1, y0, y1) = (self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1]);
        match self.segment_slope(i) {
            Some(s) => y0 * (x / x0).powf(s),
            None => {
                if x <= x0 {
                    y0
                } else if x >= x1 {
                    y1
                } else {
                    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                }
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (x0, x1, y0, y1) = (self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1]);
        match self.segment_slope(i) {
            Some(s) => s * self.eval(x) / x,
            None if x > x0 && x < x1 => (y1 - y0) / (x1 - x0),
            None => 0.0,
        }
    }
}

/// Parametric family of the coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// `g(x) = g0 x^a`, `B(x) = b0 x^b`. `g0 = 0` is the pure fragmentation
    /// configuration (no transport) and is only built by
    /// [`Coefficients::pure_fragmentation`].
    PowerLaw {
        a: f64,
        g0: f64,
        b: f64,
        b0: f64,
    },
    Tabulated {
        g: Table,
        b: Table,
    },
}

/// Classification of `g` near zero by the integrability of `1/g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthClass {
    SublinearAt0,
    SuperlinearAt0,
    ExactlyLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    family: Family,
    xi: f64,
}

impl Coefficients {
    pub fn power_law(a: f64, g0: f64, b: f64, b0: f64) -> Result<Self> {
        if !(g0 > 0.0 && g0.is_finite()) {
            return Err(Error::InvalidCoefficients(format!("g0 must be positive, got {g0}")));
        }
        if !(b0 >= 0.0 && b0.is_finite()) {
            return Err(Error::InvalidCoefficients(format!("b0 must be nonnegative, got {b0}")));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidCoefficients("exponents must be finite".into()));
        }
        Ok(Self { family: Family::PowerLaw { a, g0, b, b0 }, xi: (-a).max(0.0) })
    }

    /// `g ≡ 0`, `B(x) = b0 x^b`. Used to test the fragmentation operator alone.
    pub fn pure_fragmentation(b: f64, b0: f64) -> Result<Self> {
        if !(b0 >= 0.0 && b0.is_finite() && b.is_finite()) {
            return Err(Error::InvalidCoefficients("invalid fragmentation rate".into()));
        }
        Ok(Self { family: Family::PowerLaw { a: 0.0, g0: 0.0, b, b0 }, xi: 0.0 })
    }

    pub fn tabulated(g: Table, b: Table, xi: f64) -> Result<Self> {
        if g.ys().iter().any(|&y| y <= 0.0) {
            return Err(Error::InvalidCoefficients("tabulated g must be positive".into()));
        }
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::InvalidCoefficients(format!("xi must be nonnegative, got {xi}")));
        }
        Ok(Self { family: Family::Tabulated { g, b }, xi })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn is_pure_fragmentation(&self) -> bool {
        matches!(self.family, Family::PowerLaw { g0, .. } if g0 == 0.0)
    }

    /// Growth rate `g(x)`.
    pub fn growth(&self, x: f64) -> f64 {
        match &self.family {
            Family::PowerLaw { a, g0, .. } => g0 * x.powf(*a),
            Family::Tabulated { g, .. } => g.eval(x),
        }
    }

    pub fn growth_derivative(&self, x: f64) -> f64 {
        match &self.family {
            Family::PowerLaw { a, g0, .. } => a * g0 * x.powf(a - 1.0),
            Family::Tabulated { g, .. } => g.derivative(x),
        }
    }

    /// Fragmentation rate `B(x)`.
    pub fn rate(&self, x: f64) -> f64 {
        match &self.family {
            Family::PowerLaw { b, b0, .. } => {
                if *b0 == 0.0 {
                    0.0
                } else {
                    b0 * x.powf(*b)
                }
            }
            Family::Tabulated { b, .. } => b.eval(x),
        }
    }

    pub fn growth_class(&self) -> GrowthClass {
        match &self.family {
            Family::PowerLaw { a, g0, .. } => {
                if *a < 1.0 {
                    GrowthClass::SublinearAt0
                } else if (*a - 1.0).abs() <= 1e-12 && (*g0 - 1.0).abs() <= 1e-12 {
                    GrowthClass::ExactlyLinear
                } else {
                    GrowthClass::SuperlinearAt0
                }
            }
            Family::Tabulated { g, .. } => {
                // 1/g is integrable at 0 iff the extrapolated exponent is < 1.
                match g.segment_slope(0) {
                    Some(s) if s < 1.0 => GrowthClass::SublinearAt0,
                    _ => GrowthClass::SuperlinearAt0,
                }
            }
        }
    }
}

/// Self-similar fragment law described by its moments.
pub trait FragmentLaw {
    /// `∫₀¹ z^k p(dz)`.
    fn moment(&self, k: f64) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FragmentKernel {
    /// `p(z) = 2` on `(0, 1]`.
    Uniform,
    /// `p = 2 δ_{1/2}`.
    EqualMitosis,
}

impl FragmentLaw for FragmentKernel {
    fn moment(&self, k: f64) -> Result<f64> {
        match self {
            FragmentKernel::Uniform => {
                if k <= -1.0 {
                    Err(Error::Domain(format!("uniform kernel moment diverges for k = {k}")))
                } else {
                    Ok(2.0 / (k + 1.0))
                }
            }
            FragmentKernel::EqualMitosis => Ok(2f64.powf(1.0 - k)),
        }
    }
}

pub fn moment(kernel: FragmentKernel, k: f64) -> Result<f64> {
    kernel.moment(k)
}

/// Whether `∫₀^x (y/x) κ(x, y) dy = B(x)` at every probe. For self-similar
/// kernels `κ(x, y) = B(x)/x · p(y/x)` this is `p_1 = 1` whenever `B(x) > 0`.
pub fn kernel_rate_consistency<L: FragmentLaw>(law: &L, coeffs: &Coefficients, probe_xs: &[f64]) -> bool {
    let Ok(p1) = law.moment(1.0) else {
        return false;
    };
    !probe_xs.is_empty()
        && probe_xs.iter().all(|&x| {
            let b = coeffs.rate(x);
            x > 0.0 && (b * p1 - b).abs() <= 1e-12 * b.abs().max(1e-300)
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    Fails,
    Undecidable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub verdict: Verdict,
    pub witness: String,
}

impl Check {
    fn new(holds: bool, witness: impl Into<String>) -> Self {
        Self { verdict: if holds { Verdict::Holds } else { Verdict::Fails }, witness: witness.into() }
    }

    fn undecidable(witness: impl Into<String>) -> Self {
        Self { verdict: Verdict::Undecidable, witness: witness.into() }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `zp(z)` is a probability measure.
    pub kernel_normalised: Check,
    /// `g > 0` on the probed range.
    pub growth_positive: Check,
    /// `g(x) = O(x)` at infinity.
    pub growth_at_infinity: Check,
    /// `g(x) = O(x^{-ξ})` at zero.
    pub growth_at_zero: Check,
    /// `∫₀¹ B/g < ∞`.
    pub fragmentation_integrable: Check,
    /// `x B(x)/g(x) → 0` as `x → 0`.
    pub fragmentation_small: Check,
    /// `x B(x)/g(x) → ∞` as `x → ∞`.
    pub fragmentation_large: Check,
    /// `ω g(x) < g(ω x)` for `ω ∈ (0, 1)`; only required for mitosis.
    pub mitosis_growth: Check,
    pub mitosis_growth_required: bool,
    pub growth_class: GrowthClass,
}

impl HypothesisReport {
    /// The three conditions on `B/g`.
    pub fn fragmentation_conditions(&self) -> bool {
        self.fragmentation_integrable.holds() && self.fragmentation_small.holds() && self.fragmentation_large.holds()
    }

    /// Every hypothesis required for the kernel at hand holds.
    pub fn admissible(&self) -> bool {
        self.kernel_normalised.holds()
            && self.growth_positive.holds()
            && self.growth_at_infinity.holds()
            && self.growth_at_zero.holds()
            && self.fragmentation_conditions()
            && (!self.mitosis_growth_required || self.mitosis_growth.holds())
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let checks = [
            ("kernel_normalised", &self.kernel_normalised),
            ("growth_positive", &self.growth_positive),
            ("growth_at_infinity", &self.growth_at_infinity),
            ("growth_at_zero", &self.growth_at_zero),
            ("fragmentation_integrable", &self.fragmentation_integrable),
            ("fragmentation_small", &self.fragmentation_small),
            ("fragmentation_large", &self.fragmentation_large),
        ];
        for (name, c) in checks {
            if !c.holds() {
                out.push(name);
            }
        }
        if self.mitosis_growth_required && !self.mitosis_growth.holds() {
            out.push("mitosis_growth");
        }
        out
    }
}

/// Numeric limit of a sequence sampled on `10^{±j}`, `j = 0..=12`.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Limit {
    Zero,
    Finite(f64),
    Infinite,
    Unknown,
}

fn probe_limit(values: &[f64]) -> Limit {
    let n = values.len();
    let tail = &values[n - 3..];
    if tail.iter().any(|v| !v.is_finite()) {
        return if tail.iter().all(|v| v.is_infinite() && *v > 0.0) { Limit::Infinite } else { Limit::Unknown };
    }
    let inc = tail.windows(2).all(|w| w[1] >= w[0]);
    let dec = tail.windows(2).all(|w| w[1] <= w[0]);
    if !(inc || dec) {
        return Limit::Unknown;
    }
    let last = tail[2];
    if last.abs() < 1e-300 {
        return Limit::Zero;
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    if rel(tail[0], last) <= 0.01 && rel(tail[1], last) <= 0.01 {
        return Limit::Finite(last);
    }
    let first = values[0].abs().max(1e-300);
    if dec && last >= 0.0 && last <= 1e-3 * first {
        Limit::Zero
    } else if inc && last >= 1e3 * first {
        Limit::Infinite
    } else {
        Limit::Unknown
    }
}

fn probes(toward_zero: bool) -> Vec<f64> {
    (0..=12).map(|j| 10f64.powi(if toward_zero { -j } else { j })).collect()
}

pub fn check_hypotheses(coeffs: &Coefficients, kernel: FragmentKernel) -> HypothesisReport {
    let p1 = kernel.moment(1.0).unwrap_or(f64::NAN);
    let kernel_normalised = Check::new((p1 - 1.0).abs() <= 1e-15, format!("p_1 = {p1}"));
    let mitosis_growth_required = kernel == FragmentKernel::EqualMitosis;
    let growth_class = coeffs.growth_class();

    if coeffs.is_pure_fragmentation() {
        let fail = |w: &str| Check::new(false, w);
        return HypothesisReport {
            kernel_normalised,
            growth_positive: fail("g vanishes identically"),
            growth_at_infinity: Check::new(true, "g = 0"),
            growth_at_zero: Check::new(true, "g = 0"),
            fragmentation_integrable: fail("B/g undefined"),
            fragmentation_small: fail("B/g undefined"),
            fragmentation_large: fail("B/g undefined"),
            mitosis_growth: fail("g vanishes identically"),
            mitosis_growth_required,
            growth_class,
        };
    }

    match coeffs.family() {
        Family::PowerLaw { a, b, b0, .. } => {
            let (a, b) = (*a, *b);
            let has_b = *b0 > 0.0;
            let e = b - a + 1.0;
            HypothesisReport {
                kernel_normalised,
                growth_positive: Check::new(true, "g0 > 0"),
                growth_at_infinity: Check::new(a <= 1.0, format!("a = {a}")),
                growth_at_zero: Check::new(true, format!("xi = {}", coeffs.xi())),
                fragmentation_integrable: Check::new(!has_b || b - a > -1.0, format!("B/g ~ x^{}", b - a)),
                fragmentation_small: Check::new(!has_b || e > 0.0, format!("xB/g ~ x^{e}")),
                fragmentation_large: Check::new(
                    has_b && e > 0.0 && b >= 0.0,
                    if has_b { format!("xB/g ~ x^{e}") } else { "B = 0, xB/g = 0".to_string() },
                ),
                mitosis_growth: Check::new(a < 1.0, format!("a = {a}")),
                mitosis_growth_required,
                growth_class,
            }
        }
        Family::Tabulated { .. } => tabulated_report(coeffs, kernel_normalised, mitosis_growth_required),
    }
}

fn limit_check(lim: Limit, want: Limit, what: &str) -> Check {
    let w = format!("{what}: {lim:?}");
    match (lim, want) {
        (Limit::Unknown, _) => Check::undecidable(w),
        (Limit::Zero, Limit::Zero) | (Limit::Infinite, Limit::Infinite) => Check::new(true, w),
        (Limit::Finite(_), Limit::Finite(_)) => Check::new(true, w),
        _ => Check::new(false, w),
    }
}

fn tabulated_report(
    coeffs: &Coefficients,
    kernel_normalised: Check,
    mitosis_growth_required: bool,
) -> HypothesisReport {
    let small = probes(true);
    let large = probes(false);
    let g = |x: f64| coeffs.growth(x);
    let b = |x: f64| coeffs.rate(x);

    let growth_positive = match small.iter().chain(large.iter()).find(|&&x| g(x) <= 0.0) {
        Some(x) => Check::new(false, format!("g({x}) <= 0")),
        None => Check::new(true, "g > 0 on all probes"),
    };

    let ratio_inf: Vec<f64> = large.iter().map(|&x| g(x) / x).collect();
    let growth_at_infinity = match probe_limit(&ratio_inf) {
        Limit::Infinite => Check::new(false, "g/x unbounded"),
        Limit::Unknown => Check::undecidable("g/x: nonmonotone"),
        l => Check::new(true, format!("g/x: {l:?}")),
    };

    let xi = coeffs.xi();
    let ratio_zero: Vec<f64> = small.iter().map(|&x| g(x) * x.powf(xi)).collect();
    let growth_at_zero = match probe_limit(&ratio_zero) {
        Limit::Infinite => Check::new(false, "g x^xi unbounded at 0"),
        Limit::Unknown => Check::undecidable("g x^xi: nonmonotone"),
        l => Check::new(true, format!("g x^xi: {l:?}")),
    };

    let partial: Vec<f64> = small
        .iter()
        .map(|&lo| if lo >= 1.0 { 0.0 } else { quad::log_composite5(|x| b(x) / g(x), lo, 1.0, 40) })
        .collect();
    let fragmentation_integrable = match probe_limit(&partial[1..]) {
        Limit::Infinite => Check::new(false, "partial integrals of B/g diverge"),
        Limit::Unknown => Check::undecidable("partial integrals of B/g: no plateau"),
        l => Check::new(true, format!("int B/g: {l:?}")),
    };

    let xbg_small: Vec<f64> = small.iter().map(|&x| x * b(x) / g(x)).collect();
    let xbg_large: Vec<f64> = large.iter().map(|&x| x * b(x) / g(x)).collect();
    let fragmentation_small = limit_check(probe_limit(&xbg_small), Limit::Zero, "xB/g at 0");
    let fragmentation_large = limit_check(probe_limit(&xbg_large), Limit::Infinite, "xB/g at infinity");

    let mut mitosis_growth = Check::new(true, "omega g(x) < g(omega x) on 10x10 samples");
    'outer: for i in 1..10 {
        let w = i as f64 / 10.0;
        for &x in small.iter().chain(large.iter()).step_by(3) {
            if w * g(x) >= g(w * x) {
                mitosis_growth = Check::new(false, format!("fails at omega = {w}, x = {x}"));
                break 'outer;
            }
        }
    }

    HypothesisReport {
        kernel_normalised,
        growth_positive,
        growth_at_infinity,
        growth_at_zero,
        fragmentation_integrable,
        fragmentation_small,
        fragmentation_large,
        mitosis_growth,
        mitosis_growth_required,
        growth_class: coeffs.growth_class(),
    }
}
