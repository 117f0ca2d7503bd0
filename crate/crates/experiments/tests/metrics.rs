//! Hand-computed metric cases and metric identities.

use clue_experiments::metrics::{ConfusionMatrix, MeanStd, MetricsReport, Summary};
use proptest::prelude::*;

#[test]
fn two_class_hand_case() {
    // class 0: TP=2, FP=1, FN=1
    let cm = ConfusionMatrix::from_pairs(2, [(0, 0), (0, 0), (1, 0), (0, 1), (1, 1)]);
    let r = MetricsReport::from_confusion(cm);
    let c0 = r.per_class[0];
    assert_eq!(c0.precision, 2.0 / 3.0);
    assert_eq!(c0.recall, 2.0 / 3.0);
    assert_eq!(c0.f1, 2.0 / 3.0);
    assert_eq!(c0.support, 3);
}

#[test]
fn constant_predictor_weighted_recall() {
    let cm = ConfusionMatrix::from_pairs(2, [(0, 0), (0, 0), (0, 0), (1, 0)]);
    let r = MetricsReport::from_confusion(cm);
    assert_eq!(r.weighted_recall, 3.0 / 4.0);
    assert_eq!(r.accuracy, 3.0 / 4.0);
    assert_eq!(r.per_class[1].precision, 0.0);
    assert!(r.per_class[1].precision_undefined);
}

#[test]
fn seed_aggregation_hand_case() {
    let report = |f1_hits: usize| {
        // 10 single-class episodes with `f1_hits` correct gives recall f1_hits/10
        MetricsReport::from_predictions((0..10).map(|i| (0, usize::from(i >= f1_hits))))
    };
    let s = Summary::of(&[report(10)]);
    assert_eq!(s.f1.std, 0.0);
    let m = MeanStd::of(&[0.9, 0.8]);
    assert!((m.mean - 0.85).abs() < 1e-15);
    assert!((m.std - 0.05).abs() < 1e-15);
}

fn pairs_strategy() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..7, 0usize..7), 1..200)
}

proptest! {
    #[test]
    fn identities_hold(pairs in pairs_strategy()) {
        let r = MetricsReport::from_predictions(pairs.iter().copied());
        prop_assert_eq!(r.confusion.total(), pairs.len());
        let correct = pairs.iter().filter(|(t, p)| t == p).count();
        prop_assert_eq!(r.accuracy, correct as f64 / pairs.len() as f64);
        prop_assert!((r.weighted_recall - r.accuracy).abs() < 1e-12);
        for (c, row) in r.confusion.normalized().iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if r.confusion.support(c) == 0 {
                prop_assert_eq!(sum, 0.0);
            } else {
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }
        let supported: Vec<f64> = r.per_class.iter().filter(|s| s.support > 0).map(|s| s.f1).collect();
        let lo = supported.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = supported.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r.weighted_f1 >= lo - 1e-12 && r.weighted_f1 <= hi + 1e-12);
        for s in &r.per_class {
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn aggregation_is_order_invariant(values in prop::collection::vec(0.0f64..1.0, 1..12), rot in 0usize..12) {
        let mut rotated = values.clone();
        rotated.rotate_left(rot % values.len());
        let (a, b) = (MeanStd::of(&values), MeanStd::of(&rotated));
        prop_assert!((a.mean - b.mean).abs() < 1e-12);
        prop_assert!((a.std - b.std).abs() < 1e-12);
        prop_assert!(a.std >= 0.0);
    }
}
