//! Characteristic flow of `x' = g(x)`.

use crate::error::{Error, Result};
use crate::model::{Coefficients, Family, Table};
use crate::quad;

#[derive(Clone, Debug)]
enum Kind {
    /// `g = g0 x^a` with `a <= 1`.
    Power { a: f64, g0: f64 },
    /// `g ≡ 0`.
    Identity,
    /// Piecewise power law; `h_knots[i] = H(xs[i])`.
    Table { g: Table, h_knots: Vec<f64> },
}

/// `H(x) = ∫₁^x 1/g`, its inverse, and the flow `X_t = H⁻¹(t + H)`.
#[derive(Clone, Debug)]
pub struct FlowMap {
    coeffs: Coefficients,
    h0: f64,
    kind: Kind,
}

/// `∫_{x0}^{x} du / (y0 (u/x0)^s)`.
fn segment_primitive(x0: f64, y0: f64, s: f64, x: f64) -> f64 {
    let r = x / x0;
    if (1.0 - s).abs() < 1e-14 {
        x0 / y0 * r.ln()
    } else {
        x0 / y0 * (r.powf(1.0 - s) - 1.0) / (1.0 - s)
    }
}

impl FlowMap {
    pub fn new(coeffs: &Coefficients) -> Result<Self> {
        if coeffs.is_pure_fragmentation() {
            return Ok(Self { coeffs: coeffs.clone(), h0: f64::NEG_INFINITY, kind: Kind::Identity });
        }
        match coeffs.family() {
            Family::PowerLaw { a, g0, .. } => {
                if *a > 1.0 {
                    return Err(Error::InvalidCoefficients(format!(
                        "growth exponent a = {a} > 1 blows up in finite time"
                    )));
                }
                let h0 = if *a < 1.0 { -1.0 / (g0 * (1.0 - a)) } else { f64::NEG_INFINITY };
                Ok(Self { coeffs: coeffs.clone(), h0, kind: Kind::Power { a: *a, g0: *g0 } })
            }
            Family::Tabulated { g, .. } => {
                let n = g.segment_count();
                let slope = |i: usize| g.segment_slope(i).expect("tabulated g is positive");
                if slope(n - 1) > 1.0 {
                    return Err(Error::InvalidCoefficients("tabulated g grows superlinearly at infinity".into()));
                }
                let (xs, ys) = (g.xs(), g.ys());
                let mut h_knots = vec![0.0; xs.len()];
                for i in 0..n {
                    h_knots[i + 1] = h_knots[i] + segment_primitive(xs[i], ys[i], slope(i), xs[i + 1]);
                }
                // Shift so that H(1) = 0.
                let seg = match xs.partition_point(|&v| v <= 1.0) {
                    0 => 0,
                    i if i > n => n - 1,
                    i => i - 1,
                };
                let h1 = h_knots[seg] + segment_primitive(xs[seg], ys[seg], slope(seg), 1.0);
                h_knots.iter_mut().for_each(|h| *h -= h1);
                let s0 = slope(0);
                let h0 = if s0 < 1.0 { h_knots[0] - xs[0] / ys[0] / (1.0 - s0) } else { f64::NEG_INFINITY };
                Ok(Self { coeffs: coeffs.clone(), h0, kind: Kind::Table { g: g.clone(), h_knots } })
            }
        }
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    /// `H(0⁺)`, possibly `-∞`.
    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Kind::Identity)
    }

    pub fn h(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("H is defined for x > 0, got {x}")));
        }
        match &self.kind {
            Kind::Power { a, g0 } => {
                Ok(if *a == 1.0 { x.ln() / g0 } else { (x.powf(1.0 - a) - 1.0) / (g0 * (1.0 - a)) })
            }
            Kind::Identity => Err(Error::Domain("H is undefined when g = 0".into())),
            Kind::Table { g, h_knots } => {
                let i = table_segment(g, x);
                let s = g.segment_slope(i).unwrap();
                Ok(h_knots[i] + segment_primitive(g.xs()[i], g.ys()[i], s, x))
            }
        }
    }

    pub fn h_inv(&self, y: f64) -> Result<f64> {
        if !(y > self.h0) || y.is_nan() {
            return Err(Error::Domain(format!("H^-1 requires y > H0 = {}, got {y}", self.h0)));
        }
        match &self.kind {
            Kind::Power { a, g0 } => {
                Ok(if *a == 1.0 { (g0 * y).exp() } else { (1.0 + g0 * (1.0 - a) * y).powf(1.0 / (1.0 - a)) })
            }
            Kind::Identity => Err(Error::Domain("H is undefined when g = 0".into())),
            Kind::Table { g, h_knots } => {
                let xs = g.xs();
                let n = xs.len();
                let (mut lo, mut hi) = match h_knots.partition_point(|&h| h <= y) {
                    0 => {
                        let mut lo = xs[0] * 0.5;
                        while self.h(lo)? > y {
                            lo *= 0.5;
                        }
                        (lo, xs[0])
                    }
                    i if i >= n => {
                        let mut hi = xs[n - 1] * 2.0;
                        while self.h(hi)? < y {
                            hi *= 2.0;
                        }
                        (xs[n - 1], hi)
                    }
                    i => (xs[i - 1], xs[i]),
                };
                invert_monotone(|x| self.h(x).unwrap() - y, &mut lo, &mut hi)
            }
        }
    }

    /// `X_t(x0)`, for either sign of `t`.
    pub fn flow(&self, t: f64, x0: f64) -> Result<f64> {
        if x0 < 0.0 || x0.is_nan() {
            return Err(Error::Domain(format!("flow start must be nonnegative, got {x0}")));
        }
        if t == 0.0 {
            return Ok(x0);
        }
        if let Kind::Identity = self.kind {
            return Ok(x0);
        }
        if x0 == 0.0 {
            if t < 0.0 {
                return Err(Error::Domain("backward flow from 0 leaves (0, inf)".into()));
            }
            return if self.h0 == f64::NEG_INFINITY { Ok(0.0) } else { self.h_inv(t + self.h0) };
        }
        match &self.kind {
            Kind::Power { a, g0 } => {
                if *a == 1.0 {
                    return Ok(x0 * (g0 * t).exp());
                }
                let base = x0.powf(1.0 - a) + g0 * (1.0 - a) * t;
                if !(base > 0.0) {
                    return Err(Error::Domain(format!(
                        "backward characteristic from {x0} exits (0, inf) before time {}",
                        -t
                    )));
                }
                Ok(base.powf(1.0 / (1.0 - a)))
            }
            Kind::Identity => Ok(x0),
            Kind::Table { .. } => {
                if t < 0.0 && !(t + self.h(x0)? > self.h0) {
                    return Err(Error::Domain(format!(
                        "backward characteristic from {x0} exits (0, inf) before time {}",
                        -t
                    )));
                }
                Ok(integrate_ode(|x| self.coeffs.growth(x), x0, t))
            }
        }
    }

    /// `d/dx X_{-t}(x)` for `t >= 0`.
    pub fn jacobian_weight(&self, t: f64, x: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::Domain("jacobian weight needs t >= 0".into()));
        }
        if let Kind::Identity = self.kind {
            return Ok(1.0);
        }
        let floor = self.flow(t, 0.0)?;
        if !(x > floor) {
            return Err(Error::Domain(format!("x = {x} is not above X_t(0) = {floor}")));
        }
        match &self.kind {
            Kind::Power { .. } => {
                let back = self.flow(-t, x)?;
                Ok(self.coeffs.growth(back) / self.coeffs.growth(x))
            }
            _ => self.jacobian_weight_quadrature(t, x),
        }
    }

    /// `exp(-∫₀^t g'(X_{-τ}(x)) dτ)` by Gauss–Legendre quadrature, split at
    /// the times where the backward characteristic crosses a table knot.
    pub fn jacobian_weight_quadrature(&self, t: f64, x: f64) -> Result<f64> {
        let hx = self.h(x)?;
        let mut breaks = vec![0.0, t];
        if let Kind::Table { h_knots, .. } = &self.kind {
            breaks.extend(h_knots.iter().map(|hk| hx - hk).filter(|&tau| tau > 0.0 && tau < t));
        }
        breaks.sort_by(f64::total_cmp);
        let integrand = |tau: f64| {
            let xb = self.h_inv(hx - tau).unwrap_or(0.0);
            self.coeffs.growth_derivative(xb)
        };
        let mut total = 0.0;
        for w in breaks.windows(2) {
            total += quad::composite5(integrand, w[0], w[1], 16);
        }
        Ok((-total).exp())
    }
}

fn table_segment(g: &Table, x: f64) -> usize {
    let n = g.xs().len();
    match g.xs().partition_point(|&v| v <= x) {
        0 => 0,
        i if i >= n => n - 2,
        i => i - 1,
    }
}

/// Bisection interleaved with secant steps on an increasing function with
/// `f(lo) <= 0 <= f(hi)`; capped at 60 iterations.
fn invert_monotone<F: Fn(f64) -> f64>(f: F, lo: &mut f64, hi: &mut f64) -> Result<f64> {
    let (mut flo, mut fhi) = (f(*lo), f(*hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Domain("root not bracketed".into()));
    }
    for it in 0..60 {
        if flo == 0.0 {
            return Ok(*lo);
        }
        if fhi == 0.0 {
            return Ok(*hi);
        }
        let secant = *lo - flo * (*hi - *lo) / (fhi - flo);
        let mid = 0.5 * (*lo + *hi);
        let x = if it % 2 == 0 && secant > *lo && secant < *hi { secant } else { mid };
        let fx = f(x);
        if fx <= 0.0 {
            *lo = x;
            flo = fx;
        } else {
            *hi = x;
            fhi = fx;
        }
        if (*hi - *lo) <= 1e-15 * hi.abs() {
            break;
        }
    }
    Ok(if -flo < fhi { *lo } else { *hi })
}

/// Dormand–Prince 5(4) integration of `x' = g(x)` over time `t`.
fn integrate_ode<G: Fn(f64) -> f64>(g: G, x0: f64, t: f64) -> f64 {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] =
        [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    let dir = t.signum();
    let total = t.abs();
    let (atol, rtol) = (1e-10, 1e-12);
    let mut x = x0;
    let mut s = 0.0;
    let mut h = (total / 16.0).min(0.1 * x0.abs().max(1e-3) / g(x0).abs().max(1e-300));
    let mut k = [0.0f64; 7];
    while s < total {
        h = h.min(total - s);
        for i in 0..7 {
            let xi = x + dir * h * (0..i).map(|j| A[i][j] * k[j]).sum::<f64>();
            k[i] = g(xi.max(0.0));
        }
        let x5 = x + dir * h * (0..7).map(|i| B5[i] * k[i]).sum::<f64>();
        let x4 = x + dir * h * (0..7).map(|i| B4[i] * k[i]).sum::<f64>();
        let err = (x5 - x4).abs() / (atol + rtol * x5.abs());
        if err <= 1.0 || h < 1e-14 * total {
            s += h;
            x = x5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    x
}
