use conehj::cone::{ConePoint, Partition};
use conehj::nonlinearity::{h_eval, ConjugateModel, CovarianceModel, HMethod, Regularization, ScalarProfile};
use proptest::prelude::*;

fn reg(beta: f64) -> Regularization<f64> {
    Regularization::new(CovarianceModel::quadratic(beta).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn h_is_monotone_along_the_dual_cone(
        beta in 0.5..2.0f64,
        k in prop::collection::vec(-1.5..1.5f64, 3),
        tails in prop::collection::vec(0.0..1.0f64, 3),
    ) {
        let j = Partition::uniform(3).unwrap();
        let w = j.widths();
        // x_k = (S_k - S_{k+1}) / w_k with nonnegative tail sums S
        let s: Vec<f64> = (0..3).map(|i| tails[i..].iter().sum()).collect();
        let d: Vec<f64> = (0..3).map(|i| (s[i] - s.get(i + 1).copied().unwrap_or(0.0)) / w[i]).collect();
        let kappa = ConePoint::from_scalars(j.clone(), &k).unwrap();
        let up = kappa.add(&ConePoint::from_scalars(j, &d).unwrap()).unwrap();
        let r = reg(beta);
        let a = h_eval(&kappa, &r, HMethod::Auto).unwrap().value;
        let b = h_eval(&up, &r, HMethod::Auto).unwrap().value;
        prop_assert!(b >= a - 1e-9 * (1.0 + a.abs()), "{a} > {b}");
    }

    #[test]
    fn conjugate_is_convex_and_nonnegative(beta in 0.5..2.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64, l in 0.0..1.0f64) {
        let c = ConjugateModel::of_regularization(reg(beta));
        let top = c.domain_cap().unwrap_or(10.0);
        let (a, b) = (a * top, b * top);
        let mid = c.eval(l * a + (1.0 - l) * b);
        let chord = l * c.eval(a) + (1.0 - l) * c.eval(b);
        prop_assert!(mid <= chord + 1e-10 * (1.0 + chord.abs()));
        prop_assert!(c.eval(a) >= -1e-12);
    }
}

#[test]
fn regularization_agrees_with_the_model_near_the_origin() {
    let r = reg(1.0);
    for i in 0..=100 {
        let a = i as f64 / 100.0;
        assert!((r.at(a) - a * a).abs() < 1e-14);
    }
}
