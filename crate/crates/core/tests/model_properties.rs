use ebarx::estimators::least_squares;
use ebarx::model::{build_regressors, simulate_fixed, ArxSpec, Dataset, Orientation};
use proptest::prelude::*;

proptest! {
    #[test]
    fn reversed_forward_rows_equal_backward_rows(
        y in prop::collection::vec(-10.0f64..10.0, 8..60),
        n in 1usize..=3,
    ) {
        let mut rev = y.clone();
        rev.reverse();
        let fwd = build_regressors(&Dataset::from_series_with_leading_presample(&rev, n).unwrap(), n, 0, Orientation::Forward).unwrap();
        let bwd = build_regressors(&Dataset::from_output(y, n), n, 0, Orientation::Backward).unwrap();
        prop_assert_eq!(&fwd.phi, &bwd.phi);
        prop_assert_eq!(&fwd.y, &bwd.y);
    }
}

#[test]
fn backward_residual_variance_matches_forward() {
    let spec = ArxSpec::ar(&[1.5, -0.7], 1.0).unwrap();
    let mut gap = 0.0;
    for seed in 0..10 {
        let d = simulate_fixed(&spec, &[], 20_000, 100 + seed, 500).unwrap();
        let f = least_squares(&build_regressors(&d, 2, 0, Orientation::Forward).unwrap()).unwrap();
        let b = least_squares(&build_regressors(&d, 2, 0, Orientation::Backward).unwrap()).unwrap();
        gap += (f.sigma2 - b.sigma2).abs();
        // same deterministic parameters in both directions
        assert!((&f.estimate - &b.estimate).norm() < 0.05);
    }
    assert!(gap / 10.0 < 0.1, "mean gap {}", gap / 10.0);
}

#[test]
fn normalized_gram_stabilizes() {
    let spec = ArxSpec::ar(&[1.5, -0.7], 1.0).unwrap();
    let n = 20_000;
    let d = simulate_fixed(&spec, &[], n, 77, 500).unwrap();
    let r = build_regressors(&d, 2, 0, Orientation::Forward).unwrap();
    let half = r.head(n / 2).gram().as_matrix() / (n / 2) as f64;
    let full = r.gram().as_matrix() / n as f64;
    let rel = (&full - &half).norm() / full.norm();
    assert!(rel < 0.1, "relative change {rel}");
}
