use std::f64::consts::LN_2;

use gfrag_core::minorisation::{log_probes, mitosis_sublinearity, replay};
use gfrag_core::{
    dirac_lower_bound, drift_constants, exact_shift_grid, make_grid, mitosis_proof_interval, selfsim_small_set,
    small_set_constants, Coefficients, DriftOptions, Error, EvolutionConfig, Evolver, FragmentKernel, GridMeasure,
    GridScheme, MinorisationSetup, NuShape, Regime, SmallSetMode,
};

fn power(a: f64, g0: f64, b: f64, b0: f64) -> Coefficients {
    Coefficients::power_law(a, g0, b, b0).unwrap()
}

fn identity(x: f64) -> f64 {
    x
}

#[test]
fn uniform_dirac_spreads_with_positive_floor() {
    let c = power(1.0, 1.0, 1.0, 1.0);
    let (grid, dt) = exact_shift_grid(&c, FragmentKernel::Uniform, 1.0, &identity, 1e-3, 64.0, 3.0, 100).unwrap();
    let phi = grid.nodes().to_vec();
    let setup = MinorisationSetup {
        grid: &grid,
        coeffs: &c,
        kernel: FragmentKernel::Uniform,
        lambda: 1.0,
        phi: &phi,
        dt: Some(dt),
    };
    let bound = dirac_lower_bound(&setup, 1.0, 3.0).unwrap();
    let (lo, hi) = bound.interval;
    assert!(lo < hi && bound.floor > 0.0);
    // Fragments of a parent of size at most e³ land below it.
    assert!(hi <= 3f64.exp() * (1.0 + 1e-9));
    assert!(bound.proof_interval.is_none());
}

#[test]
fn linear_mitosis_interval_is_always_empty() {
    let c = power(1.0, 1.0, 1.0, 1.0);
    for i in 1..=80 {
        let t = 0.25 * i as f64;
        for &(eta, theta) in &[(1.0, 1.0), (0.5, 2.0), (0.1, 10.0)] {
            assert!(matches!(mitosis_proof_interval(&c, eta, theta, t), Err(Error::EmptyInterval(_))), "t={t}");
        }
    }
    let grid = make_grid(1e-2, 64.0, GridScheme::DyadicLog(32)).unwrap();
    let phi = grid.nodes().to_vec();
    let setup = MinorisationSetup {
        grid: &grid,
        coeffs: &c,
        kernel: FragmentKernel::EqualMitosis,
        lambda: 1.0,
        phi: &phi,
        dt: None,
    };
    assert!(matches!(dirac_lower_bound(&setup, 1.0, 3.0), Err(Error::EmptyInterval(_))));
}

#[test]
fn square_root_mitosis_interval_opens() {
    let c = power(0.5, 1.0, 1.0, 1.0);
    // g = √x: X_t(x) = (√x + t/2)², B(x) ≥ g(x)/x from x = 1 on, so t_B = 0 from x0 = 1.
    let flow = |t: f64, x: f64| (x.sqrt() + t / 2.0).powi(2);
    let opening = 2.0 / (2f64.sqrt() - 1.0);
    assert!(mitosis_proof_interval(&c, 1.0, 1.0, opening - 0.05).is_err());
    for t in [opening + 0.05, 6.0, 10.0, 20.0] {
        let (lo, hi) = mitosis_proof_interval(&c, 1.0, 1.0, t).unwrap();
        assert!((lo - 0.5 * flow(t, 1.0)).abs() < 1e-9 * lo);
        assert!((hi - flow(t, 0.0)).abs() < 1e-9 * hi);
        assert!(lo < hi);
    }
    let probes = log_probes(0.1, 10.0, 33);
    assert!(mitosis_sublinearity(&c, &probes, 20.0).unwrap());
    assert!(!mitosis_sublinearity(&power(1.0, 1.0, 1.0, 1.0), &probes, 20.0).unwrap());
}

#[test]
fn closed_form_small_set() {
    for b in [0.5, 1.0, 2.0] {
        for t0 in [2.0 * LN_2, 1.0, 3.0] {
            let r = 50.0;
            let s = selfsim_small_set(b, t0, r).unwrap();
            let want = (b + 3.0) * r.ln() + t0.ln() - 2.0 * (r * t0.exp()).powf(b) / b;
            assert!((s.log_alpha - want).abs() < 1e-12 * want.abs());
            let literal = (b + 3.0) * r.ln() + t0.ln() - 2.0 * r.powf((-t0 / 2.0).exp()) * (b * t0).exp() / b;
            assert!((s.log_alpha_literal - literal).abs() < 1e-12 * literal.abs());
            assert_eq!(s.c_set, (1.0 / r, r));
            assert!((s.nu_support.1 - r * t0.exp()).abs() < 1e-12 * r);
            assert!((s.nu_mass - r).abs() < 1e-12 * r);
        }
    }
    // At t0 = 2 ln 2, e^{t0} = 4 and the exponent is −2(4R)^b/b.
    let s = selfsim_small_set(2.0, 2.0 * LN_2, 10.0).unwrap();
    let displayed = (2.0 * LN_2).ln() + 5.0 * 10f64.ln() - 2.0 * 40f64.powi(2) / 2.0;
    assert!((s.log_alpha - displayed).abs() < 1e-12 * displayed.abs());
    assert!(selfsim_small_set(2.0, 1.0, 0.5).is_err());
}

#[test]
fn simulated_alpha_beats_closed_form() {
    let c = power(1.0, 1.0, 1.0, 1.0);
    let kernel = FragmentKernel::Uniform;
    let t0 = 2.0 * LN_2;
    let drift = drift_constants(Regime::LinearGrowth, 0.0, 2.0, &c, kernel, None, &DriftOptions::default()).unwrap();
    let r = 8.0 * drift.k_d;
    // V = 1/x + x on f = x m, so {V ≤ R} lies inside [1/R, R].
    let c_lo = 0.5 * (r - (r * r - 4.0).sqrt());
    let c_hi = 0.5 * (r + (r * r - 4.0).sqrt());
    let (grid, dt) = exact_shift_grid(&c, kernel, 1.0, &identity, c_lo / 4.0, 2.0 * c_hi, t0, 200).unwrap();
    let phi = grid.nodes().to_vec();
    let setup = MinorisationSetup { grid: &grid, coeffs: &c, kernel, lambda: 1.0, phi: &phi, dt: Some(dt) };
    let v = drift.weight_on_grid(&grid, &phi);
    let cert = small_set_constants(&setup, &v, r, t0, 33, NuShape::Uniform).unwrap();
    assert_eq!(cert.mode, SmallSetMode::Simulated);
    assert!(cert.c_set.0 >= 1.0 / r && cert.c_set.1 <= r);
    assert!(cert.log_alpha < 0.0);
    assert!((cert.nu.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert_eq!(replay(&setup, &cert).unwrap(), 0);

    let closed = selfsim_small_set(1.0, t0, r).unwrap();
    assert!(cert.log_alpha > closed.log_alpha, "{} vs {}", cert.log_alpha, closed.log_alpha);
}

#[test]
fn simulated_alpha_is_stable_under_refinement() {
    let c = power(1.0, 1.0, 1.0, 1.0);
    let kernel = FragmentKernel::Uniform;
    let t0 = 2.0 * LN_2;
    let drift = drift_constants(Regime::LinearGrowth, 0.0, 2.0, &c, kernel, None, &DriftOptions::default()).unwrap();
    let r = 4.0 * drift.k_d / (1.0 - drift.gamma(t0));
    let alpha = |min_steps| {
        let (grid, dt) = exact_shift_grid(&c, kernel, 1.0, &identity, 1e-3, 2.0 * r, t0, min_steps).unwrap();
        let phi = grid.nodes().to_vec();
        let setup = MinorisationSetup { grid: &grid, coeffs: &c, kernel, lambda: 1.0, phi: &phi, dt: Some(dt) };
        let v = drift.weight_on_grid(&grid, &phi);
        small_set_constants(&setup, &v, r, t0, 33, NuShape::Uniform).unwrap().alpha()
    };
    let (coarse, fine) = (alpha(200), alpha(400));
    assert!((fine / coarse - 1.0).abs() <= 0.1, "{coarse:.4e} -> {fine:.4e}");
}

#[test]
fn sublinear_mitosis_certificate_replays() {
    let c = power(0.5, 1.0, 1.0, 1.0);
    let kernel = FragmentKernel::EqualMitosis;
    let t0 = 20.0;
    let grid = make_grid(1e-3, 64.0, GridScheme::DyadicLog(16)).unwrap();
    let phi = vec![1.0; grid.len()];
    let v: Vec<f64> = grid.nodes().iter().map(|&x| 1.0 + x * x).collect();
    let setup = MinorisationSetup { grid: &grid, coeffs: &c, kernel, lambda: 1.0, phi: &phi, dt: None };
    let cert = small_set_constants(&setup, &v, 5.0, t0, 9, NuShape::Uniform).unwrap();
    assert!(mitosis_sublinearity(&c, &cert.probes, t0).unwrap());
    assert_eq!(replay(&setup, &cert).unwrap(), 0);
}

#[test]
fn time_integrated_dirac_has_inverse_flow_density() {
    // g = √x without fragmentation: ∫₀^t δ_{X_s(x0)} ds has density 1/g on [x0, X_t(x0)].
    let c = power(0.5, 1.0, 0.0, 0.0);
    let grid = make_grid(0.5, 40.0, GridScheme::LogUniform(800)).unwrap();
    let dt = 0.37 * grid.log_step();
    let ev = Evolver::new(&grid, &c, FragmentKernel::Uniform, EvolutionConfig::scaled(dt, 0.0)).unwrap();
    let (x0, t) = (1.0, 6.0);
    let steps = (t / dt).round() as usize;
    let mut m = GridMeasure::dirac(&grid, x0).unwrap();
    let mut acc = vec![0.0; grid.len()];
    for _ in 0..steps {
        for (a, v) in acc.iter_mut().zip(&m.mass) {
            *a += dt * v;
        }
        m = ev.step(&m);
    }
    let end = (x0.sqrt() + steps as f64 * dt / 2.0).powi(2);
    let (lo, hi) = (x0 + 0.1 * (end - x0), end - 0.1 * (end - x0));
    let (mut err, mut norm) = (0.0, 0.0);
    for (i, &x) in grid.nodes().iter().enumerate() {
        if (lo..=hi).contains(&x) {
            let exact = 2.0 * (grid.edges()[i + 1].sqrt() - grid.edges()[i].sqrt());
            err += (acc[i] - exact).abs();
            norm += exact;
        }
    }
    assert!(err / norm < 0.05, "L1 relative error {:.3e}", err / norm);
}
