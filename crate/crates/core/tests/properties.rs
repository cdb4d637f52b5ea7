//! Property tests for preprocessing, aggregation, and scoring.

use bootscan_core::align::{score_only_symbols, ScoringScheme};
use bootscan_core::ensemble::{aggregate, ScoreVector};
use bootscan_core::trace::{collapse_repeats, preprocess, truncate, BootSequence, Label};
use proptest::prelude::*;

fn sequence_strategy() -> impl Strategy<Value = Vec<u16>> {
    prop::collection::vec(0u16..8, 0..200)
}

fn boot(symbols: Vec<u16>) -> BootSequence {
    BootSequence {
        app_id: "app".into(),
        device_id: "dev".into(),
        label: Label::Unknown,
        symbols,
        preprocessed: false,
        alphabet_fingerprint: 1,
    }
}

proptest! {
    #[test]
    fn collapse_is_idempotent(s in sequence_strategy()) {
        let once = collapse_repeats(&s);
        prop_assert_eq!(collapse_repeats(&once), once.clone());
    }

    #[test]
    fn collapse_leaves_no_adjacent_repeats(s in sequence_strategy()) {
        let out = collapse_repeats(&s);
        prop_assert!(out.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn collapse_preserves_symbol_set_and_order(s in sequence_strategy()) {
        let out = collapse_repeats(&s);
        // collapsed output is a subsequence of the input
        let mut it = s.iter();
        for sym in &out {
            prop_assert!(it.any(|x| x == sym));
        }
        // first occurrence order preserved
        let first = |v: &[u16]| {
            let mut seen = Vec::new();
            for &x in v {
                if !seen.contains(&x) {
                    seen.push(x);
                }
            }
            seen
        };
        prop_assert_eq!(first(&s), first(&out));
    }

    #[test]
    fn preprocess_is_collapse_then_truncate(s in sequence_strategy(), max_len in 1usize..300) {
        let expected = truncate(&collapse_repeats(&s), max_len).unwrap();
        let got = preprocess(&boot(s), max_len).unwrap();
        prop_assert!(got.preprocessed);
        prop_assert_eq!(got.symbols, expected);
    }

    #[test]
    fn preprocess_respects_length_budget(s in sequence_strategy(), max_len in 1usize..300) {
        let got = preprocess(&boot(s), max_len).unwrap();
        prop_assert!(got.symbols.len() <= max_len);
    }

    #[test]
    fn preprocess_is_idempotent(s in sequence_strategy(), max_len in 1usize..300) {
        let once = preprocess(&boot(s), max_len).unwrap();
        let twice = preprocess(&once, max_len).unwrap();
        prop_assert_eq!(once.symbols, twice.symbols);
    }

    #[test]
    fn aggregate_output_is_sorted_and_bounded(
        vectors in prop::collection::vec(
            prop::collection::vec(-100.0f64..100.0, 5),
            1..6,
        )
    ) {
        let inputs: Vec<ScoreVector> = vectors
            .iter()
            .map(|v| ScoreVector::unsorted(v.clone()))
            .collect();
        let out = aggregate(&inputs).unwrap();
        prop_assert!(out.sorted);
        prop_assert!(out.values.windows(2).all(|w| w[0] <= w[1]));
        // position-wise mean of sorted vectors stays within the global range
        let lo = vectors.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        let hi = vectors.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.values.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
    }

    #[test]
    fn aggregate_of_one_vector_is_its_sorted_form(v in prop::collection::vec(-100.0f64..100.0, 1..20)) {
        let out = aggregate(&[ScoreVector::unsorted(v.clone())]).unwrap();
        let mut sorted = v;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(out.values, sorted);
    }

    #[test]
    fn self_alignment_scores_match_times_length(s in prop::collection::vec(1u16..8, 0..100)) {
        let scheme = ScoringScheme::operational();
        let (score, _) = score_only_symbols(&s, &s, &scheme).unwrap();
        prop_assert_eq!(score, s.len() as i64 * i64::from(scheme.match_score));
    }

    #[test]
    fn symmetric_gap_scheme_scores_symmetrically(
        a in prop::collection::vec(1u16..6, 0..60),
        b in prop::collection::vec(1u16..6, 0..60),
    ) {
        let scheme = ScoringScheme::new(2, -1, -3, -3).unwrap();
        let ab = score_only_symbols(&a, &b, &scheme).unwrap().0;
        let ba = score_only_symbols(&b, &a, &scheme).unwrap().0;
        prop_assert_eq!(ab, ba);
    }
}
