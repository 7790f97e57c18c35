mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use stcx_core::eval::{evaluate, iou, DetectionRecord, GroundTruth, IOU_THRESHOLD};
use stcx_core::features::ActorBox;

const CLIPS: [&str; 2] = ["clip_a", "clip_b"];

fn boxed(x1: f64, y1: f64, x2: f64, y2: f64) -> ActorBox {
    ActorBox::new(x1, y1, x2, y2, 1.0).unwrap()
}

fn random_box(r: &mut impl Rng) -> ActorBox {
    let (x, y) = (r.gen_range(0.0..0.6), r.gen_range(0.0..0.6));
    boxed(x, y, x + r.gen_range(0.1..0.4), y + r.gen_range(0.1..0.4))
}

/// Shifts a box by a fraction of its size so overlaps land on both sides
/// of the threshold.
fn near(r: &mut impl Rng, b: &ActorBox) -> ActorBox {
    let shift = r.gen_range(-0.5..0.5);
    let dx = shift * b.width();
    let dy = r.gen_range(-0.3..0.3) * b.height();
    boxed(
        (b.x1 + dx).clamp(0.0, 0.98),
        (b.y1 + dy).clamp(0.0, 0.98),
        (b.x2 + dx).clamp(0.02, 1.0).max((b.x1 + dx).clamp(0.0, 0.98) + 0.01),
        (b.y2 + dy).clamp(0.02, 1.0).max((b.y1 + dy).clamp(0.0, 0.98) + 0.01),
    )
}

fn instance(seed: u64, classes: usize) -> (Vec<DetectionRecord>, Vec<GroundTruth>) {
    let mut r = rng(seed);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for class_id in 0..classes {
        let n_gt = r.gen_range(0..=4);
        let class_gts: Vec<GroundTruth> = (0..n_gt)
            .map(|_| GroundTruth {
                clip_id: CLIPS[r.gen_range(0..2)].into(),
                bbox: random_box(&mut r),
                class_id,
            })
            .collect();
        for _ in 0..r.gen_range(0..=8) {
            let (clip_id, bbox) = match class_gts.get(r.gen_range(0..=class_gts.len())) {
                Some(g) => (g.clip_id.clone(), near(&mut r, &g.bbox)),
                None => (CLIPS[r.gen_range(0..2)].to_string(), random_box(&mut r)),
            };
            dets.push(DetectionRecord {
                clip_id,
                bbox,
                class_id,
                score: r.gen_range(0.0..1.0),
            });
        }
        gts.extend(class_gts);
    }
    (dets, gts)
}

fn oracle_iou(a: &ActorBox, b: &ActorBox) -> f64 {
    let w = a.x2.min(b.x2) - a.x1.max(b.x1);
    let h = a.y2.min(b.y2) - a.y1.max(b.y1);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter)
}

/// True positives among the first `k` ranked detections, matched from
/// scratch.
fn prefix_true_positives(ranked: &[&DetectionRecord], gts: &[&GroundTruth], k: usize) -> usize {
    let mut taken = vec![false; gts.len()];
    let mut tp = 0;
    for d in &ranked[..k] {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.clip_id != d.clip_id {
                continue;
            }
            let o = oracle_iou(&d.bbox, &gt.bbox);
            if best.map_or(true, |(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, o)) = best {
            if o >= 0.5 {
                taken[g] = true;
                tp += 1;
            }
        }
    }
    tp
}

/// AP from every prefix of the ranking: each recall step is weighted by the
/// best precision at any equal-or-deeper cut.
fn oracle_ap(dets: &[DetectionRecord], gts: &[GroundTruth], class_id: usize) -> Option<f64> {
    let gts: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == class_id).collect();
    if gts.is_empty() {
        return None;
    }
    let mut ranked: Vec<&DetectionRecord> = dets.iter().filter(|d| d.class_id == class_id).collect();
    ranked.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let n_gt = gts.len() as f64;
    let curve: Vec<(f64, f64)> = (1..=ranked.len())
        .map(|k| {
            let tp = prefix_true_positives(&ranked, &gts, k);
            (tp as f64 / k as f64, tp as f64 / n_gt)
        })
        .collect();
    let mut ap = 0.0;
    let mut previous = 0.0;
    for (k, &(_, recall)) in curve.iter().enumerate() {
        if recall > previous {
            let best = curve[k..].iter().map(|&(p, _)| p).fold(0.0, f64::max);
            ap += (recall - previous) * best;
            previous = recall;
        }
    }
    Some(ap)
}

#[test]
fn evaluator_equals_exhaustive_prefix_oracle() {
    let mut checked = 0;
    for seed in 0..10 {
        let (dets, gts) = instance(seed, 3);
        let result = evaluate(&dets, &gts, 3, IOU_THRESHOLD).unwrap_or_else(|_| panic!("instance {seed}"));
        let expected: Vec<Option<f64>> = (0..3).map(|c| oracle_ap(&dets, &gts, c)).collect();
        assert_eq!(result.per_class_ap, expected, "instance {seed}");
        let eligible: Vec<f64> = expected.iter().flatten().copied().collect();
        assert_eq!(result.mean_ap, eligible.iter().sum::<f64>() / eligible.len() as f64);
        checked += eligible.len();
    }
    assert!(checked >= 10);
}

#[test]
fn per_class_mean_matches_oracle_on_larger_instances() {
    for seed in 100..110 {
        let (dets, gts) = instance(seed, 6);
        let Ok(result) = evaluate(&dets, &gts, 6, IOU_THRESHOLD) else {
            assert!(gts.is_empty());
            continue;
        };
        let eligible: Vec<f64> = (0..6).filter_map(|c| oracle_ap(&dets, &gts, c)).collect();
        let mean = eligible.iter().sum::<f64>() / eligible.len() as f64;
        assert!((result.mean_ap - mean).abs() < 1e-12);
        assert!(result.per_class_ap.iter().flatten().all(|ap| (0.0..=1.0).contains(ap)));
    }
}

#[test]
fn invalid_records_are_rejected() {
    let (mut dets, mut gts) = instance(3, 2);
    gts.push(GroundTruth {
        clip_id: "clip_a".into(),
        bbox: boxed(0.1, 0.1, 0.2, 0.2),
        class_id: 1,
    });
    assert!(evaluate(&dets, &gts, 1, IOU_THRESHOLD).is_err());
    dets.push(DetectionRecord {
        clip_id: "clip_a".into(),
        bbox: boxed(0.1, 0.1, 0.2, 0.2),
        class_id: 0,
        score: 1.5,
    });
    assert!(evaluate(&dets, &gts, 2, IOU_THRESHOLD).is_err());
    assert!(evaluate(&[], &[], 2, IOU_THRESHOLD).is_err());
}

fn class_ap(dets: &[DetectionRecord], gts: &[GroundTruth]) -> Option<f64> {
    evaluate(dets, gts, 1, IOU_THRESHOLD).ok().map(|r| r.mean_ap)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn ap_depends_only_on_score_order(seed in any::<u64>(), power in 0.2f64..5.0) {
        let (dets, gts) = instance(seed, 1);
        let transformed: Vec<DetectionRecord> = dets
            .iter()
            .map(|d| DetectionRecord { score: 0.1 + 0.8 * d.score.powf(power), ..d.clone() })
            .collect();
        prop_assert_eq!(class_ap(&dets, &gts), class_ap(&transformed, &gts));
    }

    #[test]
    fn perfect_detection_for_a_missed_object_never_hurts(seed in any::<u64>()) {
        let (dets, gts) = instance(seed, 1);
        let missed = gts.iter().find(|g| {
            dets.iter().all(|d| d.clip_id != g.clip_id || iou(&d.bbox, &g.bbox) < IOU_THRESHOLD)
        });
        if let Some(g) = missed {
            let before = class_ap(&dets, &gts).unwrap();
            let mut more = dets.clone();
            more.push(DetectionRecord { clip_id: g.clip_id.clone(), bbox: g.bbox, class_id: 0, score: 1.0 });
            prop_assert!(class_ap(&more, &gts).unwrap() >= before);
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (random_box(&mut r), random_box(&mut r));
        let o = iou(&a, &b);
        prop_assert_eq!(o, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&o));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }
}
