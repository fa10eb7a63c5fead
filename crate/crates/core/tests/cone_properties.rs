use conehj::cone::{lift_lj, project_pj, ConePoint, Partition, StepPath};
use proptest::prelude::*;

fn partition() -> impl Strategy<Value = Partition<f64>> {
    prop::collection::btree_set(1u32..1000, 0..8).prop_map(|s| {
        let mut b: Vec<f64> = s.into_iter().map(|v| v as f64 / 1000.0).collect();
        b.push(1.0);
        Partition::from_breaks(b).unwrap()
    })
}

/// A partition with a scalar path on a second, independent partition.
fn setup() -> impl Strategy<Value = (Partition<f64>, StepPath<f64>, Vec<f64>)> {
    (partition(), partition()).prop_flat_map(|(j, k)| {
        let (nj, nk) = (j.len(), k.len());
        (
            Just(j),
            prop::collection::vec(-3.0..3.0f64, nk).prop_map(move |v| StepPath::from_scalars(k.clone(), &v).unwrap()),
            prop::collection::vec(-3.0..3.0f64, nj),
        )
    })
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

proptest! {
    #[test]
    fn projection_is_adjoint_to_the_lift((j, mu, x) in setup()) {
        let x = ConePoint::from_scalars(j.clone(), &x).unwrap();
        let lhs = project_pj(&mu, &j).inner(&x).unwrap();
        let rhs = mu.inner(&lift_lj(&x)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn lift_is_an_isometry_and_projection_a_contraction((j, mu, x) in setup()) {
        let x = ConePoint::from_scalars(j.clone(), &x).unwrap();
        prop_assert!((lift_lj(&x).norm() - x.norm()).abs() <= 1e-12 * (1.0 + x.norm()));
        prop_assert!(project_pj(&mu, &j).norm() <= mu.norm() * (1.0 + 1e-12));
        let back = project_pj(&lift_lj(&x), &j);
        prop_assert!(back.sub(&x).unwrap().linf_norm() <= 1e-12 * (1.0 + x.linf_norm()));
    }

    #[test]
    fn projection_keeps_nondecreasing_paths_in_the_cone((j, mu, _x) in setup()) {
        let v = sorted(mu.steps().flat().iter().map(|v| v.abs()).collect());
        let mono = StepPath::from_scalars(mu.partition().clone(), &v).unwrap();
        prop_assert!(project_pj(&mono, &j).is_in_cone(Some(1e-12)));
    }

    #[test]
    fn rearrangement_dominates_in_the_dual_order(v in prop::collection::vec(-2.0..2.0f64, 1..16)) {
        let j = Partition::uniform(v.len()).unwrap();
        let x = ConePoint::from_scalars(j, &v).unwrap();
        let s = x.rearrange_sharp().unwrap();
        prop_assert!(s.flat().windows(2).all(|p| p[0] <= p[1]));
        prop_assert!(s.sub(&x).unwrap().is_in_dual(Some(1e-12)));
        let again = s.rearrange_sharp().unwrap();
        prop_assert_eq!(again.flat(), s.flat());
        prop_assert_eq!(sorted(s.flat().to_vec()), sorted(v));
    }
}
