//! Small fixed-order Gauss–Legendre rules.

const GL3_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

const GL5_X: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Three-point rule on `[a, b]`.
pub fn gauss3<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL3_X.iter().zip(GL3_W.iter()).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Five-point rule on `[a, b]`.
pub fn gauss5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL5_X.iter().zip(GL5_W.iter()).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Composite five-point rule with `panels` equal panels.
pub fn composite5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + h * i as f64;
            gauss5(&f, lo, lo + h)
        })
        .sum()
}

/// Integral over `[a, b]` (with `0 < a < b`) computed in the variable `log x`,
/// which suits integrands with power-law behaviour.
pub fn log_composite5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    composite5(
        |u| {
            let x = u.exp();
            f(x) * x
        },
        a.ln(),
        b.ln(),
        panels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        assert!((gauss3(|x| x.powi(5) + x * x, 0.0, 2.0) - (64.0 / 6.0 + 8.0 / 3.0)).abs() < 1e-12);
        assert!((gauss5(|x| x.powi(9), 0.0, 1.0) - 0.1).abs() < 1e-14);
    }

    #[test]
    fn log_variable_integral() {
        let v = log_composite5(|x| 1.0 / x, 1e-6, 1.0, 40);
        assert!((v - 1e6_f64.ln()).abs() < 1e-10);
    }
}
