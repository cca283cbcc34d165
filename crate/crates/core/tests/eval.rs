use ccjs::eval::{default_zeta, row_support, score_recovery};
use ccjs::problem::{InstanceParams, ProblemInstance};
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(k: usize, n: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], k * n)
        .prop_map(move |v| Array2::from_shape_vec((k, n), v).unwrap())
}

#[test]
fn truth_support_has_s_rows() {
    let inst = ProblemInstance::generate(&InstanceParams::default(), 12).unwrap();
    let s = row_support(inst.truth().matrix(), 0.0).unwrap();
    assert_eq!(s.r0, 3);
    assert!(s.support.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn extra_row_breaks_sparsity_match() {
    let inst = ProblemInstance::generate(&InstanceParams::default(), 12).unwrap();
    let truth = inst.truth().matrix();
    let zeta = default_zeta(truth).unwrap();
    let spare = (0..truth.nrows()).find(|&r| truth.row(r).iter().all(|v| *v == 0.0)).unwrap();
    let mut x = truth.clone();
    x[[spare, 0]] = 2.0 * zeta;
    let r = score_recovery(&x, truth, zeta).unwrap();
    assert!(!r.sparsity_match && !r.pattern_match);
    assert_eq!(r.recovered.r0, 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn support_shrinks_with_threshold(x in matrix(6, 3), a in 0.0f64..12.0, b in 0.0f64..12.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let big = row_support(&x, lo).unwrap();
        let small = row_support(&x, hi).unwrap();
        prop_assert!(small.support.iter().all(|r| big.support.contains(r)));
        prop_assert_eq!(big.r0, big.support.len());
    }

    #[test]
    fn pattern_implies_sparsity(x in matrix(5, 2), t in matrix(5, 2), zeta in 0.0f64..5.0) {
        let r = score_recovery(&x, &t, zeta).unwrap();
        prop_assert!(!r.pattern_match || r.sparsity_match);
    }

    #[test]
    fn flags_are_scale_consistent(x in matrix(5, 2), t in matrix(5, 2), zeta in 0.01f64..5.0, theta in 1e-3f64..1e3) {
        let r = score_recovery(&x, &t, zeta).unwrap();
        // skip rows sitting on the threshold, where rounding of θ·‖row‖ decides
        let near = |m: &Array2<f64>| ccjs::confidence::row_norms(m).iter().any(|n| (n - zeta).abs() < 1e-9 * zeta.max(1.0));
        prop_assume!(!near(&x));
        let s = score_recovery(&(&x * theta), &(&t * theta), zeta * theta).unwrap();
        prop_assert_eq!(r.pattern_match, s.pattern_match);
        prop_assert_eq!(r.sparsity_match, s.sparsity_match);
    }
}
