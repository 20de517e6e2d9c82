mod common;

use std::collections::BTreeSet;

use dpvis_core::analytics::{self, Scope};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn flows_are_conserved(seed in any::<u64>(), k in 2usize..=5, n in 1usize..=25) {
        let (ds, decoding) = common::decoded_synthetic(k, n, seed);
        prop_assert_eq!(common::check_aggregations(&ds, &decoding, &Scope::all()), Ok(()));
    }

    #[test]
    fn scoping_equals_restriction(seed in any::<u64>(), k in 2usize..=4, n in 2usize..=15, mask in any::<u32>()) {
        let (ds, decoding) = common::decoded_synthetic(k, n, seed);
        let ids: BTreeSet<String> = ds
            .subjects
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> (i % 32) & 1 == 1)
            .map(|(_, s)| s.id.clone())
            .collect();
        prop_assume!(!ids.is_empty());
        prop_assert_eq!(common::check_aggregations(&ds, &decoding, &Scope::subjects(ids.clone())), Ok(()));
        prop_assert_eq!(common::check_scoping(&ds, &decoding, &ids), Ok(()));
    }

    #[test]
    fn feature_means_match_a_plain_scan(seed in any::<u64>(), k in 2usize..=5) {
        let (ds, decoding) = common::decoded_synthetic(k, 20, seed);
        let summary = analytics::feature_summary(&decoding, &ds, &Scope::all()).unwrap();
        for var in ds.dynamic_variables() {
            for state in 0..k {
                let values: Vec<f64> = ds
                    .subjects
                    .iter()
                    .zip(&decoding.subjects)
                    .flat_map(|(s, d)| s.visits.iter().zip(&d.visits))
                    .filter(|(_, dv)| dv.state == state)
                    .filter_map(|(v, _)| v.value(&var.name))
                    .collect();
                let cell = summary.cell(&var.name, state).unwrap();
                if values.is_empty() {
                    prop_assert_eq!(cell.mean, None);
                } else {
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    prop_assert!((cell.mean.unwrap() - mean).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn kde_mass_for_large_samples() {
    use rand::Rng;
    let mut rng = common::rng(1);
    for n in [1usize, 2, 10, 1000, 10_000] {
        let ages: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..240.0)).collect();
        let curve = analytics::kde(&ages, None).unwrap();
        assert!((curve.integral() - 1.0).abs() < 1e-3, "n = {n}: {}", curve.integral());
    }
}

#[test]
fn identical_subgroup_gives_identical_curve() {
    let (ds, _) = common::decoded_synthetic(4, 60, 3);
    let dual = analytics::event_kde(&ds, &Scope::all(), "onset", 256).unwrap();
    assert_eq!(dual.subgroup.as_ref(), Some(&dual.population));
}
