mod common;

use dpvis_core::patterns::{self, StateSequence};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn closed_patterns_match_enumeration(seed in any::<u64>(), min_support in 1usize..=4, top_n in 1usize..=60) {
        let seqs = common::random_sequences(&mut common::rng(seed));
        prop_assert_eq!(common::check_patterns(&seqs, min_support, top_n), Ok(()));
    }
}

#[test]
fn repeated_items_and_default_truncation() {
    let seqs: Vec<StateSequence> = [vec![0, 1, 0, 1, 2], vec![1, 0, 1], vec![0, 1, 2, 1, 0], vec![2, 2, 1]]
        .into_iter()
        .enumerate()
        .map(|(i, states)| StateSequence { subject_id: i.to_string(), states })
        .collect();
    common::check_patterns(&seqs, 1, patterns::DEFAULT_TOP_N).unwrap();
    common::check_patterns(&seqs, 2, 3).unwrap();
}
