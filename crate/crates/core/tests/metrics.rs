mod common;

use common::gen::mask_pair;
use crackseg::metrics::{report_csv, round_report};
use crackseg::{class_metrics, confusion, evaluate_set, image_level_fp_fn, BinaryMask, ConfusionCounts, MetricsReport};
use proptest::prelude::*;

/// Counts by direct enumeration of the four cases.
fn counts_oracle(pred: &BinaryMask, gt: &BinaryMask) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

fn counts() -> impl Strategy<Value = ConfusionCounts> {
    (0u64..1000, 0u64..1000, 0u64..1000, 0u64..1000).prop_map(|(tp, fp, fn_, tn)| ConfusionCounts { tp, fp, fn_, tn })
}

proptest! {
    #[test]
    fn confusion_matches_enumeration((p, g) in mask_pair(24, 24)) {
        prop_assert_eq!(confusion(&p, &g).unwrap(), counts_oracle(&p, &g));
    }

    #[test]
    fn f1_is_a_function_of_iou(c in counts()) {
        let m = class_metrics(&c);
        prop_assert!((m.f1 - 2.0 * m.iou / (1.0 + m.iou)).abs() <= 1e-12);
        prop_assert!(0.0 <= m.iou && m.iou <= m.f1 && m.f1 <= 1.0);
    }

    #[test]
    fn background_swaps_roles(c in counts()) {
        let b = c.background();
        prop_assert_eq!((b.tp, b.fp, b.fn_, b.tn), (c.tn, c.fn_, c.fp, c.tp));
        prop_assert_eq!(b.background(), c);
    }

    #[test]
    fn evaluation_is_additive(
        a in proptest::collection::vec(mask_pair(10, 10), 1..6),
        b in proptest::collection::vec(mask_pair(10, 10), 1..6),
    ) {
        let split = |v: &[(BinaryMask, BinaryMask)]| -> (Vec<BinaryMask>, Vec<BinaryMask>) {
            v.iter().cloned().unzip()
        };
        let (pa, ga) = split(&a);
        let (pb, gb) = split(&b);
        let ra = evaluate_set(&pa, &ga).unwrap();
        let rb = evaluate_set(&pb, &gb).unwrap();
        let all: Vec<_> = a.iter().chain(&b).cloned().collect();
        let (p, g) = split(&all);
        let r = evaluate_set(&p, &g).unwrap();
        prop_assert_eq!(r.counts, ra.counts + rb.counts);
        let pooled = MetricsReport::from_counts(ra.counts + rb.counts, ra.image_fp + rb.image_fp, ra.image_fn + rb.image_fn, all.len());
        prop_assert_eq!(r.crack_iou, pooled.crack_iou);
        prop_assert_eq!(r.mean_f1, pooled.mean_f1);
        prop_assert_eq!((r.image_fp, r.image_fn), (pooled.image_fp, pooled.image_fn));
    }

    #[test]
    fn image_level_ignores_non_toggling_changes(
        pairs in proptest::collection::vec(mask_pair(8, 8), 1..10),
        flips in proptest::collection::vec(any::<prop::sample::Index>(), 1..10),
    ) {
        let (mut preds, gts): (Vec<BinaryMask>, Vec<BinaryMask>) = pairs.into_iter().unzip();
        let before = image_level_fp_fn(&preds, &gts).unwrap();
        for (m, idx) in preds.iter_mut().zip(&flips) {
            // flip one pixel unless that would empty or fill an empty mask
            let i = idx.index(m.len());
            let crack = m.crack_count();
            let v = m.data()[i];
            if (v && crack > 1) || (!v && crack > 0) {
                m.data_mut()[i] = !v;
            }
        }
        prop_assert_eq!(image_level_fp_fn(&preds, &gts).unwrap(), before);
    }
}

#[test]
fn baseline_row_rounding() {
    let report = MetricsReport::from_class_values(
        crackseg::ClassMetrics {
            iou: 0.485,
            precision: 0.73,
            recall: 0.60,
            f1: 0.649,
        },
        0.98,
        0.99,
    );
    assert_eq!(round_report(report.mean_iou, 2), "0.73");
    assert_eq!(round_report(report.mean_f1, 2), "0.82");
    let csv = report_csv("model", &[("Baseline".into(), report)], false);
    assert_eq!(
        csv.lines().nth(1),
        Some("Baseline,0.73,0.82,0,0,0.485,0.98,0.73,0.60,0.649,0.99")
    );
}

#[test]
fn zero_denominators_score_one() {
    let m = class_metrics(&ConfusionCounts {
        tn: 10,
        ..Default::default()
    });
    assert_eq!((m.iou, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
}

#[test]
fn mismatched_shapes_are_rejected() {
    let err = confusion(&BinaryMask::empty(2, 3), &BinaryMask::empty(3, 2)).unwrap_err();
    assert_eq!(err.name(), "DimensionMismatch");
    let err = evaluate_set(&[BinaryMask::empty(1, 1)], &[]).unwrap_err();
    assert_eq!(err.name(), "LengthMismatch");
}
