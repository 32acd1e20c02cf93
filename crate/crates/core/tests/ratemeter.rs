use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use gfrag_core::ratemeter::{dominant_period, least_squares};
use gfrag_core::{
    direct_eigen, gaussian_bump, make_grid, measure_rate, rate_vs_certificate, selfsim_certificate, Coefficients,
    ComparisonVerdict, DirectOptions, EigenTriple, FragmentKernel, Grid, GridScheme, RateFit, RateOptions, RateOutcome,
    RateSetup, Rejection, WeightSpec,
};
use proptest::prelude::*;

fn linear_setup(b: f64, kernel: FragmentKernel, x_max: f64) -> (Arc<Grid>, Coefficients, EigenTriple, f64) {
    let grid = make_grid(1e-4, x_max, GridScheme::DyadicLog(64)).unwrap();
    let c = Coefficients::power_law(1.0, 1.0, b, 1.0).unwrap();
    let dt = grid.log_step();
    let phi = grid.nodes().to_vec();
    let d = direct_eigen(&grid, &c, kernel, 1.0, &phi, &DirectOptions { dt, tol: 1e-13, t_max: 300.0 }).unwrap();
    (grid, c, d.triple, dt)
}

fn fitted(rho: f64) -> RateOutcome {
    RateOutcome::Fitted(RateFit {
        rho_emp: rho,
        fit_window: (1.0, 3.0),
        r_squared: 0.999,
        snapshots: 100,
        initial: "synthetic".into(),
    })
}

#[test]
fn stationary_start_is_rejected() {
    let (grid, c, triple, dt) = linear_setup(1.0, FragmentKernel::Uniform, 30.0);
    let setup = RateSetup { grid: &grid, coeffs: &c, kernel: FragmentKernel::Uniform, triple: &triple, dt };
    let m = measure_rate(&setup, &triple.n, "N", &WeightSpec::SelfSimilarQuadratic, &RateOptions::new(5.0)).unwrap();
    assert!(matches!(m.outcome, RateOutcome::Rejected(Rejection::AlreadyStationary { .. })), "{:?}", m.outcome);
}

#[test]
fn uniform_linear_bump_decays_faster_than_certified() {
    let (grid, c, triple, dt) = linear_setup(1.0, FragmentKernel::Uniform, 30.0);
    let setup = RateSetup { grid: &grid, coeffs: &c, kernel: FragmentKernel::Uniform, triple: &triple, dt };
    let n0 = gaussian_bump(&grid, 3.0, 0.5);
    let m = measure_rate(&setup, &n0, "bump", &WeightSpec::SelfSimilarQuadratic, &RateOptions::new(10.0)).unwrap();
    let fit = m.outcome.fit().unwrap_or_else(|| panic!("{:?}", m.outcome));
    assert!(fit.rho_emp > 0.0 && fit.r_squared >= 0.98);
    assert_eq!(m.times.len(), m.distances.len());
    assert!(m.distances.last().unwrap() < &m.distances[0]);
    let cert = selfsim_certificate(1.0, 2.0 * LN_2).unwrap();
    let cmp = rate_vs_certificate(&m.outcome, Some(&cert.harris));
    assert_eq!(cmp.verdict, ComparisonVerdict::LowerBoundHolds);
    assert!(cmp.log_gap.unwrap() > 0.0);
}

#[test]
fn linear_mitosis_oscillates() {
    let (grid, c, triple, dt) = linear_setup(1.0, FragmentKernel::EqualMitosis, 16.0);
    let setup = RateSetup { grid: &grid, coeffs: &c, kernel: FragmentKernel::EqualMitosis, triple: &triple, dt };
    let n0 = gaussian_bump(&grid, 3.0, 0.5);
    let weight = WeightSpec::XkPlusXK { k: -0.5, big_k: 2.0 };
    let m = measure_rate(&setup, &n0, "bump", &weight, &RateOptions::new(30.0)).unwrap();
    match &m.outcome {
        RateOutcome::Rejected(r @ Rejection::Oscillation { period, .. }) => {
            assert!((period - LN_2).abs() < 0.1 * LN_2, "{period}");
            assert!(r.diagnostic().contains("oscillat"), "{}", r.diagnostic());
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(rate_vs_certificate(&m.outcome, None).verdict, ComparisonVerdict::ConsistentlyNoGap);
}

#[test]
fn comparison_examples() {
    let cert = selfsim_certificate(2.0, 2.0 * LN_2).unwrap();
    let cmp = rate_vs_certificate(&fitted(0.5), Some(&cert.harris));
    assert_eq!(cmp.verdict, ComparisonVerdict::LowerBoundHolds);
    // ln ρ_cert is about −4.3e7 at b = 2.
    let gap = cmp.log_gap.unwrap();
    assert!((gap - (0.5f64.ln() - cert.harris.rho.ln)).abs() < 1e-6 * gap);
    assert!(gap > 4.0e7 && gap < 4.7e7, "{gap}");
    let rejected = RateOutcome::Rejected(Rejection::NoDecay { slope: 0.1 });
    assert_eq!(rate_vs_certificate(&rejected, Some(&cert.harris)).verdict, ComparisonVerdict::Inconclusive);
    assert_eq!(rate_vs_certificate(&fitted(0.5), None).verdict, ComparisonVerdict::Inconclusive);
    assert_eq!(rate_vs_certificate(&rejected, None).verdict, ComparisonVerdict::ConsistentlyNoGap);
}

#[test]
fn csv_has_header_and_one_row_per_sample() {
    let (grid, c, triple, dt) = linear_setup(2.0, FragmentKernel::Uniform, 5.0);
    let setup = RateSetup { grid: &grid, coeffs: &c, kernel: FragmentKernel::Uniform, triple: &triple, dt };
    let n0 = gaussian_bump(&grid, 2.0, 0.5);
    let m = measure_rate(&setup, &n0, "bump", &WeightSpec::SelfSimilarQuadratic, &RateOptions::new(2.0)).unwrap();
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,d");
    assert_eq!(lines.len(), m.times.len() + 1);
    assert!(lines[1].starts_with("0,"));
}

proptest! {
    #[test]
    fn least_squares_recovers_lines(slope in -5.0f64..5.0, icept in -10.0f64..10.0, n in 3usize..60) {
        let x: Vec<f64> = (0..n).map(|k| 0.3 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| icept + slope * x).collect();
        let (s, i, r2) = least_squares(&x, &y);
        prop_assert!((s - slope).abs() < 1e-9 && (i - icept).abs() < 1e-9);
        prop_assert!(r2 > 1.0 - 1e-9 || slope.abs() < 1e-12);
    }

    #[test]
    fn dominant_period_finds_sinusoids(period in 0.4f64..2.0, phase in 0.0f64..6.3) {
        let dt = 0.02;
        let r: Vec<f64> = (0..600).map(|k| (2.0 * PI * k as f64 * dt / period + phase).sin()).collect();
        let p = dominant_period(&r, dt).unwrap();
        // One DFT bin of resolution at window length 12.
        prop_assert!((p - period).abs() <= period * period / 12.0 + 1e-9, "{} vs {}", p, period);
    }
}
