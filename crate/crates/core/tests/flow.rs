use gfrag_core::{Coefficients, Error, FlowMap, Table};
use proptest::prelude::*;
use std::f64::consts::E;

fn power(a: f64) -> FlowMap {
    FlowMap::new(&Coefficients::power_law(a, 1.0, 1.0, 1.0).unwrap()).unwrap()
}

/// `g = √x` given as a table, so the quadrature and ODE paths are exercised.
fn sqrt_table() -> FlowMap {
    let xs: Vec<f64> = (-40..=40).map(|j| 2f64.powf(j as f64 / 4.0)).collect();
    let g = Table::new(xs.clone(), xs.iter().map(|x| x.sqrt()).collect(), false).unwrap();
    let b = Table::new(xs.clone(), xs.clone(), true).unwrap();
    FlowMap::new(&Coefficients::tabulated(g, b, 0.0).unwrap()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn primitive_examples() {
    let lin = power(1.0);
    assert_eq!(lin.h(1.0).unwrap(), 0.0);
    assert!((lin.h(E).unwrap() - 1.0).abs() < 1e-15);
    assert!((power(0.5).h(4.0).unwrap() - 2.0).abs() < 1e-14);
    assert!(matches!(lin.h(0.0), Err(Error::Domain(_))));
    assert!(matches!(lin.h(-1.0), Err(Error::Domain(_))));
    assert!((sqrt_table().h(4.0).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn primitive_at_zero() {
    assert_eq!(power(1.0).h0(), f64::NEG_INFINITY);
    assert!((power(0.5).h0() + 2.0).abs() < 1e-14);
    assert!((power(0.0).h0() + 1.0).abs() < 1e-14);
}

#[test]
fn flow_examples() {
    for &(t, x0) in &[(0.3, 1.0), (2.0, 0.01), (5.0, 7.0)] {
        assert!(rel(power(1.0).flow(t, x0).unwrap(), x0 * f64::exp(t)) < 1e-14);
        assert!(rel(power(0.0).flow(t, x0).unwrap(), x0 + t) < 1e-14);
    }
    assert!((power(0.5).flow(2.0, 1.0).unwrap() - 4.0).abs() < 1e-13);
    assert!(rel(power(1.0).flow(-1.0, 0.1).unwrap(), 0.1 / E) < 1e-14);
    assert!(rel(sqrt_table().flow(2.0, 1.0).unwrap(), 4.0) < 1e-8);
}

#[test]
fn flow_from_zero() {
    assert_eq!(power(1.0).flow(3.0, 0.0).unwrap(), 0.0);
    assert!((power(0.0).flow(3.0, 0.0).unwrap() - 3.0).abs() < 1e-14);
    assert!((power(0.5).flow(2.0, 0.0).unwrap() - 1.0).abs() < 1e-14);
    assert_eq!(power(1.0).flow(0.0, 2.5).unwrap(), 2.5);
}

#[test]
fn backward_exit_is_a_domain_error() {
    assert!(matches!(power(0.0).flow(-2.0, 1.0), Err(Error::Domain(_))));
    assert!(matches!(power(0.5).flow(-3.0, 1.0), Err(Error::Domain(_))));
    assert!(matches!(sqrt_table().flow(-3.0, 1.0), Err(Error::Domain(_))));
    assert!(power(1.0).flow(-50.0, 1.0).is_ok());
}

#[test]
fn jacobian_examples() {
    assert!(rel(power(1.0).jacobian_weight(1.7, 3.0).unwrap(), (-1.7f64).exp()) < 1e-14);
    assert!((power(0.0).jacobian_weight(1.7, 3.0).unwrap() - 1.0).abs() < 1e-14);
    assert!(matches!(power(0.0).jacobian_weight(2.0, 1.5), Err(Error::Domain(_))));

    let f = sqrt_table();
    let h = 1e-5;
    let fd = (f.flow(-2.0, 4.0 + h).unwrap() - f.flow(-2.0, 4.0 - h).unwrap()) / (2.0 * h);
    let q = f.jacobian_weight(2.0, 4.0).unwrap();
    assert!((q - fd).abs() < 1e-6, "quadrature {q} finite difference {fd}");
    assert!((q - 0.5).abs() < 1e-8);
}

#[test]
fn sublinear_flow_on_grid() {
    for &a in &[0.0, 0.5, 0.9] {
        let f = power(a);
        for i in 1..20 {
            let w = i as f64 / 20.0;
            for j in 0..20 {
                let x = 10f64.powf(-2.0 + 4.0 * j as f64 / 19.0);
                for &t in &[0.1, 1.0, 5.0] {
                    assert!(w * f.flow(t, x).unwrap() < f.flow(t, w * x).unwrap());
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn analytic_composition(a in -0.5f64..=1.0, s in 0.0f64..3.0, t in 0.0f64..3.0, x in 0.05f64..20.0) {
        let f = power(a);
        let two = f.flow(t, f.flow(s, x).unwrap()).unwrap();
        prop_assert!(rel(two, f.flow(t + s, x).unwrap()) < 1e-10);
        prop_assert!(rel(f.flow(-t, f.flow(t, x).unwrap()).unwrap(), x) < 1e-10);
    }

    #[test]
    fn tabulated_composition(s in 0.0f64..2.0, t in 0.0f64..2.0, x in 0.05f64..20.0) {
        let f = sqrt_table();
        let two = f.flow(t, f.flow(s, x).unwrap()).unwrap();
        prop_assert!(rel(two, f.flow(t + s, x).unwrap()) < 1e-6);
        prop_assert!(rel(f.flow(-t, f.flow(t, x).unwrap()).unwrap(), x) < 1e-6);
    }

    #[test]
    fn flow_is_monotone(a in -0.5f64..=1.0, t in 0.01f64..3.0, x in 0.05f64..20.0, dx in 0.01f64..1.0) {
        let f = power(a);
        prop_assert!(f.flow(t, x + dx).unwrap() > f.flow(t, x).unwrap());
        prop_assert!(f.flow(t + dx, x).unwrap() > f.flow(t, x).unwrap());
    }

    #[test]
    fn jacobian_matches_finite_differences(a in -0.5f64..=1.0, t in 0.0f64..2.0, x in 1.0f64..20.0) {
        let f = power(a);
        prop_assume!(f.flow(-t, x - 1e-3).is_ok());
        let h = 1e-5 * x;
        let fd = (f.flow(-t, x + h).unwrap() - f.flow(-t, x - h).unwrap()) / (2.0 * h);
        prop_assert!(rel(f.jacobian_weight(t, x).unwrap(), fd) < 1e-5);
    }

    #[test]
    fn tabulated_jacobian_matches_finite_differences(t in 0.0f64..1.5, x in 2.0f64..20.0) {
        let f = sqrt_table();
        let h = 1e-5 * x;
        let fd = (f.flow(-t, x + h).unwrap() - f.flow(-t, x - h).unwrap()) / (2.0 * h);
        prop_assert!(rel(f.jacobian_weight(t, x).unwrap(), fd) < 1e-5);
    }
}
