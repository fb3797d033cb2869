use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{InferenceAccounting, PixelCounts};
use crate::dataio::ClassLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ClassLabel,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    /// Absent when the class has no ground truth.
    pub ap: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    pub fn new(class: ClassLabel, tp: usize, fp: usize, fn_: usize, ap: Option<f64>) -> Self {
        Self {
            class,
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            ap,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
}

impl LatencySummary {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |p: f64| {
            let r = (p * s.len() as f64).ceil() as usize;
            s[r.clamp(1, s.len()) - 1]
        };
        Self {
            count: s.len(),
            mean_ms: s.iter().sum::<f64>() / s.len() as f64,
            p50_ms: rank(0.50),
            p99_ms: rank(0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub classes: Vec<ClassMetrics>,
    /// Mean AP over classes that have ground truth.
    pub map: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub pixel: Option<PixelCounts>,
    pub pixel_precision: Option<f64>,
    pub pixel_recall: Option<f64>,
    pub accounting: Option<InferenceAccounting>,
    pub latency: BTreeMap<String, LatencySummary>,
    pub counters: BTreeMap<String, u64>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn new(iou_threshold: f64, classes: Vec<ClassMetrics>) -> Self {
        let tp = classes.iter().map(|c| c.tp).sum();
        let fp = classes.iter().map(|c| c.fp).sum();
        let fn_ = classes.iter().map(|c| c.fn_).sum();
        let aps: Vec<f64> = classes.iter().filter_map(|c| c.ap).collect();
        let mut notes = Vec::new();
        for c in classes.iter().filter(|c| c.ap.is_none()) {
            notes.push(format!("class {} has no ground truth; excluded from mAP", c.class));
        }
        Self {
            iou_threshold,
            map: (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            tp,
            fp,
            fn_,
            classes,
            pixel: None,
            pixel_precision: None,
            pixel_recall: None,
            accounting: None,
            latency: BTreeMap::new(),
            counters: BTreeMap::new(),
            notes,
        }
    }

    pub fn with_pixels(mut self, counts: PixelCounts) -> Self {
        self.pixel_precision = Some(counts.precision());
        self.pixel_recall = Some(counts.recall());
        if counts.zero_extraction() {
            self.notes.push("no pixels extracted; pixel precision reported as 1.0".into());
        }
        if counts.zero_ground_truth() {
            self.notes.push("no ground-truth pixels; pixel recall reported as 1.0".into());
        }
        self.pixel = Some(counts);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(out, "IoU threshold {:.2}", self.iou_threshold);
        let _ = writeln!(
            out,
            "{:<8} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}",
            "class", "tp", "fp", "fn", "precision", "recall", "ap"
        );
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<8} {:>7} {:>7} {:>7} {:>9.4} {:>9.4} {:>9}",
                c.class.as_str(),
                c.tp,
                c.fp,
                c.fn_,
                c.precision,
                c.recall,
                fmt_opt(c.ap)
            );
        }
        let _ = writeln!(
            out,
            "{:<8} {:>7} {:>7} {:>7} {:>9.4} {:>9.4} {:>9}",
            "all",
            self.tp,
            self.fp,
            self.fn_,
            self.precision,
            self.recall,
            fmt_opt(self.map)
        );
        if let (Some(p), Some(r)) = (self.pixel_precision, self.pixel_recall) {
            let _ = writeln!(out, "pixel precision {p:.4}  pixel recall {r:.4}");
        }
        if let Some(a) = &self.accounting {
            let _ = writeln!(
                out,
                "frames {}  inferences {} (drain {})  reduction {:.3}",
                a.frames_processed, a.inference_count, a.drain_inferences, a.reduction_factor
            );
        }
        if !self.latency.is_empty() {
            let _ = writeln!(
                out,
                "{:<10} {:>8} {:>10} {:>10} {:>10}",
                "stage", "n", "mean_ms", "p50_ms", "p99_ms"
            );
            for (stage, l) in &self.latency {
                let _ = writeln!(
                    out,
                    "{:<10} {:>8} {:>10.3} {:>10.3} {:>10.3}",
                    stage, l.count, l.mean_ms, l.p50_ms, l.p99_ms
                );
            }
        }
        for (k, v) in &self.counters {
            let _ = writeln!(out, "{k}: {v}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let l = LatencySummary::from_samples(&s);
        assert_eq!((l.p50_ms, l.p99_ms, l.mean_ms), (50.0, 99.0, 50.5));
        assert_eq!(LatencySummary::from_samples(&[]).count, 0);
    }

    #[test]
    fn map_skips_classes_without_ground_truth() {
        let r = EvalReport::new(
            0.3,
            vec![
                ClassMetrics::new(ClassLabel::Car, 1, 0, 0, Some(1.0)),
                ClassMetrics::new(ClassLabel::Bike, 0, 2, 0, None),
            ],
        );
        assert_eq!(r.map, Some(1.0));
        assert_eq!(r.notes.len(), 1);
        assert!(r.to_table().contains("bike"));
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
