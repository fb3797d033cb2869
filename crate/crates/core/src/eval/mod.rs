//! Detection and extraction metrics: IoU, greedy VOC matching, all-points
//! interpolated AP, pixel-set precision/recall and inference accounting.

mod pixel;
mod report;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::backmap::SceneDetection;
use crate::dataio::{Annotation, ClassLabel, StreamId};
use crate::geometry::BoundingBox;

pub use pixel::{pixel_precision_recall, union_area, PixelCounts};
pub use report::{ClassMetrics, EvalReport, LatencySummary};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Outcome of matching one prediction set against ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchOutcome {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `true` where the prediction at the same input index is a TP.
    pub flags: Vec<bool>,
}

type Scope = (StreamId, u64, ClassLabel);

/// Greedy matching per (stream, frame, class): predictions in descending
/// score order each claim the unmatched ground truth with the highest IoU at
/// or above `iou_thr`. Equal scores keep input order; equal IoUs go to the
/// earlier ground truth.
pub fn match_detections(preds: &[SceneDetection], gts: &[Annotation], iou_thr: f64) -> MatchOutcome {
    let mut by_scope: HashMap<Scope, Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_scope
            .entry((g.stream_id.clone(), g.frame_index, g.class_label))
            .or_default()
            .push(i);
    }
    let mut matched = vec![false; gts.len()];
    let mut flags = vec![false; preds.len()];

    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    for p in order {
        let pred = &preds[p];
        let key = (pred.stream_id.clone(), pred.frame_index, pred.class_label);
        let Some(candidates) = by_scope.get(&key) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &g in candidates {
            if matched[g] {
                continue;
            }
            let v = iou(&pred.bbox, &gts[g].bbox);
            if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            matched[g] = true;
            flags[p] = true;
        }
    }
    let tp = flags.iter().filter(|&&f| f).count();
    MatchOutcome {
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
        flags,
    }
}

/// All-points interpolated average precision of `(score, is_tp)` pairs.
/// `None` when there is no ground truth.
pub fn average_precision(flagged: &[(f64, bool)], total_gt: usize) -> Option<f64> {
    if total_gt == 0 {
        return None;
    }
    let mut sorted = flagged.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(sorted.len());
    for (k, &(_, hit)) in sorted.iter().enumerate() {
        if hit {
            tp += 1;
        }
        curve.push((tp as f64 / total_gt as f64, tp as f64 / (k + 1) as f64));
    }
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(recall, precision) in &curve {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// One detector call and the camera frames whose crops it consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub composition_id: u64,
    pub frames: Vec<(StreamId, u64)>,
    pub drain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceAccounting {
    pub frames_processed: u64,
    pub inference_count: u64,
    pub drain_inferences: u64,
    /// Camera frames per detector call; 0 when no call was made.
    pub reduction_factor: f64,
}

/// `frames_processed` counts every evaluated camera frame, including frames
/// that produced no crops and therefore appear in no record.
pub fn inference_accounting(frames_processed: u64, log: &[InferenceRecord]) -> InferenceAccounting {
    let calls = log.len() as u64;
    InferenceAccounting {
        frames_processed,
        inference_count: calls,
        drain_inferences: log.iter().filter(|r| r.drain).count() as u64,
        reduction_factor: if calls == 0 {
            0.0
        } else {
            frames_processed as f64 / calls as f64
        },
    }
}

/// Distinct frames consumed across a log.
pub fn frames_in_log(log: &[InferenceRecord]) -> usize {
    log.iter()
        .flat_map(|r| r.frames.iter())
        .collect::<HashSet<_>>()
        .len()
}

/// Per-class and overall detection metrics.
pub fn detection_metrics(
    preds: &[SceneDetection],
    gts: &[Annotation],
    iou_thr: f64,
) -> (Vec<ClassMetrics>, MatchOutcome) {
    let outcome = match_detections(preds, gts, iou_thr);
    let mut flagged: BTreeMap<ClassLabel, Vec<(f64, bool)>> = BTreeMap::new();
    for (p, &hit) in preds.iter().zip(&outcome.flags) {
        flagged.entry(p.class_label).or_default().push((p.score, hit));
    }
    let mut gt_count: BTreeMap<ClassLabel, usize> = BTreeMap::new();
    for g in gts {
        *gt_count.entry(g.class_label).or_default() += 1;
    }
    let classes = ClassLabel::ALL
        .iter()
        .filter(|c| flagged.contains_key(c) || gt_count.contains_key(c))
        .map(|&class| {
            let f = flagged.get(&class).map(Vec::as_slice).unwrap_or(&[]);
            let g = gt_count.get(&class).copied().unwrap_or(0);
            let tp = f.iter().filter(|x| x.1).count();
            ClassMetrics::new(class, tp, f.len() - tp, g - tp, average_precision(f, g))
        })
        .collect();
    (classes, outcome)
}
