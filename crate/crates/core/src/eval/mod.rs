//! Frame-level detection evaluation: IoU matching, per-class average
//! precision with all-point interpolation, and mean AP.

mod files;

use std::collections::HashMap;
use std::fmt::Write as _;

pub use files::{parse_detections, parse_ground_truth, write_detections, write_ground_truth};

use crate::error::{Error, Result};
use crate::features::ActorBox;

/// IoU threshold for a detection to count as correct.
pub const IOU_THRESHOLD: f64 = 0.5;

/// A scored (box, class) prediction on one clip's key frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRecord {
    pub clip_id: String,
    pub bbox: ActorBox,
    pub class_id: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub clip_id: String,
    pub bbox: ActorBox,
    pub class_id: usize,
}

/// Intersection over union of two boxes.
pub fn iou(a: &ActorBox, b: &ActorBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Stable sort by descending score.
pub fn sort_detections(dets: &mut [DetectionRecord]) {
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
}

/// Marks each detection (in the given order) as true or false positive.
///
/// A detection claims the highest-IoU ground truth of its clip that is still
/// unmatched (first one on ties), provided the IoU reaches `iou_thresh`.
pub fn match_detections(dets: &[DetectionRecord], gts: &[GroundTruth], iou_thresh: f64) -> Vec<bool> {
    let mut by_clip: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_clip.entry(g.clip_id.as_str()).or_default().push(i);
    }
    let mut matched = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let Some(candidates) = by_clip.get(d.clip_id.as_str()) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for &g in candidates {
                if matched[g] {
                    continue;
                }
                let overlap = iou(&d.bbox, &gts[g].bbox);
                if best.map_or(true, |(_, b)| overlap > b) {
                    best = Some((g, overlap));
                }
            }
            match best {
                Some((g, overlap)) if overlap >= iou_thresh => {
                    matched[g] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// Area under the precision envelope for one class.
///
/// `dets` must already be in descending score order. Returns `None` when the
/// class has no ground truth.
pub fn average_precision(dets: &[DetectionRecord], gts: &[GroundTruth], iou_thresh: f64) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let hits = match_detections(dets, gts, iou_thresh);
    let n_gt = gts.len() as f64;
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &hit) in hits.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut previous_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - previous_recall) * p;
        previous_recall = *r;
    }
    Some(ap)
}

/// Arithmetic mean over classes that have ground truth.
pub fn mean_ap(per_class: &[Option<f64>]) -> Result<f64> {
    let eligible: Vec<f64> = per_class.iter().flatten().copied().collect();
    if eligible.is_empty() {
        return Err(Error::Evaluation("no class has any ground truth".into()));
    }
    Ok(eligible.iter().sum::<f64>() / eligible.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// `None` for classes without ground truth (excluded from the mean).
    pub per_class_ap: Vec<Option<f64>>,
    pub mean_ap: f64,
    pub gt_counts: Vec<usize>,
    pub det_counts: Vec<usize>,
}

impl EvalResult {
    /// Mean AP over a subset of classes, skipping those without ground truth.
    pub fn subset_mean_ap(&self, classes: &[usize]) -> Result<f64> {
        let subset: Vec<Option<f64>> = classes.iter().map(|&c| self.per_class_ap[c]).collect();
        mean_ap(&subset)
    }

    pub fn total_detections(&self) -> usize {
        self.det_counts.iter().sum()
    }

    /// Text report: one CSV row per class, then the mAP line. APs are
    /// percentages with two decimals.
    pub fn report(&self, class_names: &[&str]) -> String {
        let mut out = String::from("class,name,gt_count,detections,ap\n");
        for (c, ap) in self.per_class_ap.iter().enumerate() {
            let name = class_names.get(c).copied().unwrap_or("-");
            let ap = ap.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v));
            writeln!(out, "{c},{name},{},{},{ap}", self.gt_counts[c], self.det_counts[c]).unwrap();
        }
        writeln!(out, "detections,{}", self.total_detections()).unwrap();
        writeln!(out, "mAP,{:.2}", 100.0 * self.mean_ap).unwrap();
        out
    }
}

/// Per-class AP and mAP for `num_classes` classes.
pub fn evaluate(
    dets: &[DetectionRecord],
    gts: &[GroundTruth],
    num_classes: usize,
    iou_thresh: f64,
) -> Result<EvalResult> {
    if let Some(d) = dets.iter().find(|d| d.class_id >= num_classes || !(0.0..=1.0).contains(&d.score)) {
        return Err(Error::Evaluation(format!("invalid detection record {d:?}")));
    }
    if let Some(g) = gts.iter().find(|g| g.class_id >= num_classes) {
        return Err(Error::Evaluation(format!("ground truth class {} out of range", g.class_id)));
    }
    let mut per_class_ap = Vec::with_capacity(num_classes);
    let mut gt_counts = Vec::with_capacity(num_classes);
    let mut det_counts = Vec::with_capacity(num_classes);
    for class in 0..num_classes {
        let mut class_dets: Vec<DetectionRecord> = dets.iter().filter(|d| d.class_id == class).cloned().collect();
        sort_detections(&mut class_dets);
        let class_gts: Vec<GroundTruth> = gts.iter().filter(|g| g.class_id == class).cloned().collect();
        per_class_ap.push(average_precision(&class_dets, &class_gts, iou_thresh));
        gt_counts.push(class_gts.len());
        det_counts.push(class_dets.len());
    }
    Ok(EvalResult {
        mean_ap: mean_ap(&per_class_ap)?,
        per_class_ap,
        gt_counts,
        det_counts,
    })
}
