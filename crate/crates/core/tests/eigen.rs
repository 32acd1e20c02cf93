use gfrag_core::eigen::{crossover_rho, explicit_density, mitosis_series_coefficients};
use gfrag_core::{
    crossover_a, direct_eigen, dual_eigen, explicit_eigen, make_grid, Coefficients, DirectOptions, DualOptions,
    EvolutionConfig, Evolver, ExplicitCase, FragmentKernel, GridMeasure, GridScheme,
};
use std::f64::consts::PI;

fn power(a: f64, g0: f64, b: f64, b0: f64) -> Coefficients {
    Coefficients::power_law(a, g0, b, b0).unwrap()
}

/// Largest root of `f` on a log scan followed by bisection.
fn last_sign_change(f: impl Fn(f64) -> f64) -> f64 {
    let xs: Vec<f64> = (0..=6000).map(|i| 10f64.powf(-3.0 + i as f64 * 1e-3)).collect();
    let i = xs.windows(2).rposition(|w| f(w[0]) <= 0.0 && f(w[1]) > 0.0).unwrap();
    let (mut lo, mut hi) = (xs[i], xs[i + 1]);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[test]
fn crossover_examples() {
    let c = power(1.0, 1.0, 2.0, 1.0);
    let a = crossover_a(&c, FragmentKernel::Uniform, 2.0).unwrap();
    // ϱ(x) = x(−2x − x + x³/3) changes sign at x = 3.
    let root = last_sign_change(|x| x * (-3.0 * x + x * x * x / 3.0));
    assert!((root - 3.0).abs() < 1e-9);
    assert!((a - root).abs() < 1e-6, "A = {a}");
    for &x in &[0.5, 2.0, 3.5, 10.0] {
        let rho = crossover_rho(&c, FragmentKernel::Uniform, 2.0, x).unwrap();
        assert!((rho - x * (-3.0 * x + x.powi(3) / 3.0)).abs() < 1e-12 * x.powi(4));
    }

    let faster = power(1.0, 1.0, 3.0, 1.0);
    assert!(crossover_a(&faster, FragmentKernel::Uniform, 2.0).unwrap() < a);
    let near_one = crossover_a(&c, FragmentKernel::Uniform, 1.1).unwrap();
    assert!(near_one > a);
    assert!(crossover_a(&c, FragmentKernel::Uniform, 1.0).is_err());
}

#[test]
fn dual_linear_growth() {
    let d = dual_eigen(&power(1.0, 1.0, 1.0, 1.0), FragmentKernel::Uniform, 1e-8, &DualOptions::default()).unwrap();
    assert!(d.converged);
    assert!((d.lambda - 1.0).abs() < 1e-3);
    let c = d.phi.eval(1.0);
    for &x in &[0.05, 0.3, 2.0, 8.0] {
        assert!((d.phi.eval(x) / (c * x) - 1.0).abs() < 1e-3, "x = {x}");
    }

    let d = dual_eigen(&power(1.0, 2.0, 2.0, 1.0), FragmentKernel::Uniform, 1e-8, &DualOptions::default()).unwrap();
    assert!((d.lambda - 2.0).abs() < 2e-3, "λ = {}", d.lambda);
}

#[test]
fn dual_constant_mitosis() {
    let d =
        dual_eigen(&power(0.0, 1.0, 0.0, 1.0), FragmentKernel::EqualMitosis, 1e-8, &DualOptions::default()).unwrap();
    assert!((d.lambda - 1.0).abs() < 1e-3, "λ = {}", d.lambda);
    let c = d.phi.eval(1.0);
    for &x in &[0.01, 0.5, 3.0, 10.0] {
        assert!((d.phi.eval(x) / c - 1.0).abs() < 1e-3, "x = {x}");
    }
}

#[test]
fn truncated_solutions_respect_upper_bound() {
    for (c, kernel) in [
        (power(1.0, 1.0, 1.0, 1.0), FragmentKernel::Uniform),
        (power(0.5, 1.0, 1.0, 1.0), FragmentKernel::EqualMitosis),
        (power(0.0, 1.0, 2.0, 1.0), FragmentKernel::Uniform),
    ] {
        let opts = DualOptions::default();
        let d = dual_eigen(&c, kernel, 1e-6, &opts).unwrap();
        for s in &d.solutions {
            let n = s.nodes.len();
            for (i, (&x, &p)) in s.nodes.iter().zip(&s.phi_r).enumerate() {
                assert!(p <= 1.0 + x.powf(opts.k) + 1e-8, "φ_R({x}) = {p} at R = {}", s.r);
                if i + 1 < n {
                    assert!(p > 0.0);
                }
            }
            assert!(s.residual <= 1e-8);
        }
        // λ_R stays bounded and its increments shrink.
        let l = d.lambdas();
        assert!(l.iter().all(|v| v.is_finite() && *v > 0.0));
        let steps: Vec<f64> = l.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(steps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{l:?}");
    }
}

#[test]
fn dual_derivative_bounded_on_compacts() {
    let d = dual_eigen(&power(0.5, 1.0, 1.0, 1.0), FragmentKernel::Uniform, 1e-8, &DualOptions::default()).unwrap();
    let slopes: Vec<f64> = d
        .solutions
        .iter()
        .map(|s| {
            let pairs: Vec<(f64, f64)> =
                s.nodes.iter().zip(&s.phi_r).filter(|(&x, _)| x <= 4.0).map(|(&x, &p)| (x, p)).collect();
            pairs.windows(2).map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()).fold(0.0, f64::max)
        })
        .collect();
    let first = slopes[0];
    assert!(slopes.iter().all(|&s| s.is_finite() && s <= 2.0 * first), "{slopes:?}");
}

#[test]
fn dual_boundary_behaviour() {
    let opts = DualOptions { x_min: 1e-5, ..DualOptions::default() };
    // ∫₀¹ 1/g < ∞: φ stays positive at the left end.
    let sub = dual_eigen(&power(0.0, 1.0, 1.0, 1.0), FragmentKernel::Uniform, 1e-6, &opts).unwrap();
    assert!(sub.phi.eval(1e-5) / sub.phi.eval(1.0) > 0.1);
    // g(x) = x: φ ∝ x vanishes at 0.
    let lin = dual_eigen(&power(1.0, 1.0, 1.0, 1.0), FragmentKernel::Uniform, 1e-6, &opts).unwrap();
    let r1 = lin.phi.eval(1e-3) / lin.phi.eval(1.0);
    let r2 = lin.phi.eval(1e-5) / lin.phi.eval(1.0);
    assert!(r2 < 2e-5 && r2 < r1 / 50.0, "{r1} {r2}");
}

#[test]
fn malthus_exponent_matches_dual_eigenvalue() {
    let c = power(1.0, 1.0, 2.0, 1.0);
    let kernel = FragmentKernel::Uniform;
    let d = dual_eigen(&c, kernel, 1e-8, &DualOptions::default()).unwrap();
    let grid = make_grid(1e-4, 6.0, GridScheme::DyadicLog(64)).unwrap();
    let phi = d.phi.on_grid(&grid);
    let dt = grid.log_step();
    let ev = Evolver::new(&grid, &c, kernel, EvolutionConfig::scaled(dt, 0.0)).unwrap();
    let mut n = GridMeasure::from_density(&grid, |x| (-2.0 * (x - 1.0) * (x - 1.0)).exp());
    n = ev.advance(&n, ev.steps_for(4.0));
    let t_span = 4.0;
    let before = n.integrate(&phi);
    let after = ev.advance(&n, ev.steps_for(t_span)).integrate(&phi);
    let malthus = (after / before).ln() / (ev.steps_for(t_span) as f64 * dt);
    assert!((malthus / d.lambda - 1.0).abs() < 1e-3, "Malthus {malthus} vs λ {}", d.lambda);
}

#[test]
fn explicit_examples() {
    let grid = make_grid(1e-4, 40.0, GridScheme::LogUniform(2000)).unwrap();
    let t = explicit_eigen(ExplicitCase::SelfSimilar { g0: 1.0, b0: 1.0, gamma: 1.0 }, &grid).unwrap();
    assert_eq!(t.lambda, 1.0);
    for (i, &x) in grid.nodes().iter().enumerate().step_by(97) {
        let (lo, hi) = (grid.edges()[i], grid.edges()[i + 1]);
        let want = (-lo).exp() - (-hi).exp();
        assert!((t.n.mass[i] - want).abs() < 1e-10 * want.max(1e-12));
        assert!((t.phi[i] / x - 1.0).abs() < 1e-12);
    }
    // The window [1e-4, 40] misses the mass of e^{-x} below x_min.
    let window = (-1e-4f64).exp() - (-40f64).exp();
    assert!((t.n.total() - window).abs() < 1e-12);
    assert!((t.n.integrate(&t.phi) - 1.0).abs() < 1e-4);

    let n2 = explicit_density(ExplicitCase::SelfSimilar { g0: 1.0, b0: 1.0, gamma: 2.0 });
    for x in [0.0f64, 0.5, 1.0, 2.5] {
        let want = (2.0 / PI).sqrt() * (-x * x / 2.0).exp();
        assert!((n2(x) - want).abs() < 1e-12);
    }

    let m = explicit_eigen(ExplicitCase::ConstantMitosis { terms: 25 }, &grid).unwrap();
    assert_eq!(m.lambda, 1.0);
    assert!(m.phi.iter().all(|&p| p == 1.0));
}

#[test]
fn mitosis_series_is_stationary() {
    // N' + 2N = 4N(2x) for g = B = 1, λ = 1.
    let alpha = mitosis_series_coefficients(25);
    let term = |n: usize, x: f64| {
        let s = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        s * alpha[n] * (-(2f64.powi(n as i32 + 1)) * x).exp()
    };
    let n_of = |x: f64| (0..alpha.len()).map(|n| term(n, x)).sum::<f64>();
    let dn_of = |x: f64| (0..alpha.len()).map(|n| -(2f64.powi(n as i32 + 1)) * term(n, x)).sum::<f64>();
    let xs: Vec<f64> = (0..=2000).map(|i| 0.01 * 2000f64.powf(i as f64 / 2000.0)).collect();
    let scale = xs.iter().map(|&x| n_of(x).abs()).fold(0.0, f64::max);
    let worst = xs.iter().map(|&x| (dn_of(x) + 2.0 * n_of(x) - 4.0 * n_of(2.0 * x)).abs()).fold(0.0, f64::max);
    assert!(worst / scale <= 1e-6, "residual {worst:.3e}");
    let density = explicit_density(ExplicitCase::ConstantMitosis { terms: 25 });
    assert!((density(0.3) - n_of(0.3)).abs() < 1e-14);
}

#[test]
fn linear_mitosis_has_no_direct_limit() {
    let grid = make_grid(1e-3, 16.0, GridScheme::DyadicLog(64)).unwrap();
    let c = power(1.0, 1.0, 1.0, 1.0);
    let phi = grid.nodes().to_vec();
    let opts = DirectOptions { dt: grid.log_step(), tol: 1e-6, t_max: 40.0 };
    let d = direct_eigen(&grid, &c, FragmentKernel::EqualMitosis, 1.0, &phi, &opts).unwrap();
    assert!(!d.converged);
    let tail = &d.distances[d.distances.len() / 2..];
    assert!(tail.iter().all(|&x| x > 1e-6), "{tail:?}");
}

#[test]
fn uniform_direct_limit_matches_closed_form() {
    let grid = make_grid(1e-4, 24.0, GridScheme::LogUniform(800)).unwrap();
    let c = power(1.0, 1.0, 1.0, 1.0);
    let phi = grid.nodes().to_vec();
    let opts = DirectOptions { dt: grid.log_step(), tol: 1e-12, t_max: 200.0 };
    let d = direct_eigen(&grid, &c, FragmentKernel::Uniform, 1.0, &phi, &opts).unwrap();
    assert!(d.converged);
    let n = &d.triple.n;
    assert!((n.total() - 1.0).abs() < 1e-8);
    assert!((n.integrate(&d.triple.phi) - 1.0).abs() < 1e-8);
    let err: f64 = grid
        .edges()
        .windows(2)
        .zip(grid.nodes())
        .zip(&n.mass)
        .map(|((w, &x), m)| (1.0 + x * x) * (m - ((-w[0]).exp() - (-w[1]).exp())).abs())
        .sum();
    assert!(err < 1e-3, "weighted TV {err:.3e}");
}
