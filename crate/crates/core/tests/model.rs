use gfrag_core::{
    check_hypotheses, kernel_rate_consistency, moment, Coefficients, Error, FragmentKernel, FragmentLaw, GrowthClass,
    Result, Table,
};
use proptest::prelude::*;

/// `p(z) = 3` on `(0, 1]`, integrated with the composite midpoint rule.
struct FlatThree;

impl FragmentLaw for FlatThree {
    fn moment(&self, k: f64) -> Result<f64> {
        let n = 20_000;
        let h = 1.0 / n as f64;
        Ok((0..n).map(|i| 3.0 * ((i as f64 + 0.5) * h).powf(k) * h).sum())
    }
}

#[test]
fn moment_examples() {
    assert_eq!(moment(FragmentKernel::Uniform, 1.0).unwrap(), 1.0);
    assert_eq!(moment(FragmentKernel::Uniform, 0.0).unwrap(), 2.0);
    assert_eq!(moment(FragmentKernel::EqualMitosis, 2.0).unwrap(), 0.5);
    assert!((moment(FragmentKernel::Uniform, 2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!(matches!(moment(FragmentKernel::Uniform, -1.0), Err(Error::Domain(_))));
    assert!(matches!(moment(FragmentKernel::Uniform, -4.0), Err(Error::Domain(_))));
}

#[test]
fn rate_consistency_examples() {
    let c = Coefficients::power_law(1.0, 1.0, 1.0, 1.0).unwrap();
    assert!(kernel_rate_consistency(&FragmentKernel::Uniform, &c, &[1.0, 2.0, 5.0]));
    assert!(kernel_rate_consistency(&FragmentKernel::EqualMitosis, &c, &[0.5]));
    let p1 = FlatThree.moment(1.0).unwrap();
    assert!((p1 - 1.5).abs() < 1e-8);
    assert!(!kernel_rate_consistency(&FlatThree, &c, &[1.0]));
    assert!(!kernel_rate_consistency(&FragmentKernel::Uniform, &c, &[]));
}

#[test]
fn hypothesis_examples() {
    let c = Coefficients::power_law(1.0, 1.0, 1.0, 1.0).unwrap();
    let r = check_hypotheses(&c, FragmentKernel::Uniform);
    assert!(r.kernel_normalised.holds());
    assert!(r.growth_positive.holds());
    assert!(r.fragmentation_conditions());
    assert!(!r.mitosis_growth.holds());
    assert!(r.admissible());
    assert_eq!(r.growth_class, GrowthClass::ExactlyLinear);

    let r = check_hypotheses(&c, FragmentKernel::EqualMitosis);
    assert!(!r.mitosis_growth.holds());
    assert!(r.mitosis_growth_required);
    assert!(!r.admissible());

    let c = Coefficients::power_law(0.0, 1.0, 0.0, 0.0).unwrap();
    let r = check_hypotheses(&c, FragmentKernel::Uniform);
    assert!(!r.fragmentation_large.holds());
    assert!(!r.admissible());
}

#[test]
fn mitosis_with_sublinear_growth_is_admissible() {
    let c = Coefficients::power_law(0.5, 1.0, 1.0, 1.0).unwrap();
    let r = check_hypotheses(&c, FragmentKernel::EqualMitosis);
    assert!(r.admissible(), "{:?}", r.failures());
    assert_eq!(r.growth_class, GrowthClass::SublinearAt0);
    assert_eq!(c.xi(), 0.0);
    let c = Coefficients::power_law(-0.5, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(c.xi(), 0.5);
}

#[test]
fn linear_class_needs_unit_rate() {
    let c = Coefficients::power_law(1.0, 2.0, 1.0, 1.0).unwrap();
    assert_eq!(c.growth_class(), GrowthClass::SuperlinearAt0);
    let c = Coefficients::power_law(1.5, 1.0, 2.0, 1.0).unwrap();
    assert_eq!(c.growth_class(), GrowthClass::SuperlinearAt0);
}

#[test]
fn sublinear_growth_on_grid() {
    for &a in &[-1.0, 0.0, 0.25, 0.5, 0.9] {
        let c = Coefficients::power_law(a, 1.3, 1.0, 1.0).unwrap();
        for i in 0..50 {
            let w = (i as f64 + 0.5) / 50.0;
            for j in 0..50 {
                let x = 10f64.powf(-3.0 + 6.0 * j as f64 / 49.0);
                assert!(w * c.growth(x) < c.growth(w * x), "a={a} w={w} x={x}");
            }
        }
    }
}

#[test]
fn tabulated_reports_are_deterministic() {
    let xs: Vec<f64> = (-6..=6).map(|j| 10f64.powi(j)).collect();
    let g = Table::new(xs.clone(), xs.iter().map(|x| x.powf(0.7)).collect(), false).unwrap();
    let b = Table::new(xs.clone(), xs.iter().map(|x| 2.0 * x).collect(), true).unwrap();
    let c = Coefficients::tabulated(g, b, 0.0).unwrap();
    let a = serde_json::to_string(&check_hypotheses(&c, FragmentKernel::Uniform)).unwrap();
    let b = serde_json::to_string(&check_hypotheses(&c, FragmentKernel::Uniform)).unwrap();
    assert_eq!(a, b);
}

fn kernel() -> impl Strategy<Value = FragmentKernel> {
    prop_oneof![Just(FragmentKernel::Uniform), Just(FragmentKernel::EqualMitosis)]
}

proptest! {
    #[test]
    fn moments_strictly_decrease(kern in kernel(), k1 in -0.99f64..20.0, dk in 1e-3f64..10.0) {
        let m1 = moment(kern, k1).unwrap();
        let m2 = moment(kern, k1 + dk).unwrap();
        prop_assert!(m1 > m2);
    }

    #[test]
    fn first_moment_is_one(kern in kernel()) {
        prop_assert_eq!(moment(kern, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn power_law_reports_are_deterministic(
        a in -1.0f64..1.5, g0 in 0.1f64..3.0, b in 0.0f64..3.0, b0 in 0.1f64..3.0, kern in kernel()
    ) {
        let c = Coefficients::power_law(a, g0, b, b0).unwrap();
        let r1 = check_hypotheses(&c, kern);
        let r2 = check_hypotheses(&c, kern);
        prop_assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
        prop_assert_eq!(r1.mitosis_growth.holds(), a < 1.0);
    }

    #[test]
    fn power_law_growth_is_positive(a in -2.0f64..2.0, g0 in 0.01f64..10.0, x in 1e-6f64..1e6) {
        let c = Coefficients::power_law(a, g0, 1.0, 1.0).unwrap();
        prop_assert!(c.growth(x) > 0.0);
        prop_assert!(c.rate(x) >= 0.0);
    }
}
