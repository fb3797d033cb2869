use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, Detection, Detector, DetectorError};
use crate::composer::CompositeFrame;
use crate::dataio::{Annotation, ClassLabel, StreamId};
use crate::geometry::{BoundingBox, RectF};
use crate::raster::PixelBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Maximum translation applied to each box, in input pixels.
    pub jitter_px: f64,
    pub drop_rate: f64,
    /// Probability of one false box per call.
    pub spurious_rate: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            jitter_px: 0.0,
            drop_rate: 0.0,
            spurious_rate: 0.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("drop_rate", self.drop_rate), ("spurious_rate", self.spurious_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if !self.jitter_px.is_finite() || self.jitter_px < 0.0 {
            return Err(format!("jitter must be a non-negative number, got {}", self.jitter_px));
        }
        Ok(())
    }

    fn is_exact(&self) -> bool {
        self.jitter_px == 0.0 && self.drop_rate == 0.0 && self.spurious_rate == 0.0
    }
}

/// Answers from curated ground truth: every annotation overlapping a
/// placed crop is reported at its mapped position with score 1.
#[derive(Debug)]
pub struct OracleDetector {
    input_side: u32,
    config: OracleConfig,
    truth: HashMap<(StreamId, u64), Vec<(ClassLabel, BoundingBox)>>,
    rng: ChaCha8Rng,
}

impl OracleDetector {
    pub fn new(input_side: u32, config: OracleConfig) -> Self {
        Self {
            input_side,
            config,
            truth: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    /// Register annotations under their own stream ids.
    pub fn add_annotations(&mut self, annotations: &[Annotation]) {
        for a in annotations {
            self.insert(a.stream_id.clone(), a);
        }
    }

    /// Register annotations under another stream id, for replicas.
    pub fn add_annotations_as(&mut self, stream_id: &StreamId, annotations: &[Annotation]) {
        for a in annotations {
            self.insert(stream_id.clone(), a);
        }
    }

    fn insert(&mut self, stream_id: StreamId, a: &Annotation) {
        self.truth
            .entry((stream_id, a.frame_index))
            .or_default()
            .push((a.class_label, a.bbox));
    }

    /// Exact mapped ground truth before perturbation.
    pub fn exact(&self, composite: &CompositeFrame) -> Vec<Detection> {
        let inv = 1.0 / composite.scale_factor;
        let mut out = Vec::new();
        for p in &composite.placements {
            let key = (p.origin.stream_id.clone(), p.origin.frame_index);
            let Some(objects) = self.truth.get(&key) else {
                continue;
            };
            for &(class_label, bbox) in objects {
                let Some(visible) = bbox.intersection(&p.origin.scene_box) else {
                    continue;
                };
                let dx = f64::from(p.composite_box.x) - f64::from(p.origin.scene_box.x);
                let dy = f64::from(p.composite_box.y) - f64::from(p.origin.scene_box.y);
                out.push(Detection {
                    bbox: RectF::from(visible).translate(dx, dy).scale(inv),
                    class_label,
                    score: 1.0,
                });
            }
        }
        out
    }

    fn perturb(&mut self, exact: Vec<Detection>) -> Vec<Detection> {
        let side = f64::from(self.input_side);
        let cfg = self.config;
        let mut out = Vec::with_capacity(exact.len());
        for mut d in exact {
            if cfg.drop_rate > 0.0 && self.rng.gen_bool(cfg.drop_rate) {
                continue;
            }
            if cfg.jitter_px > 0.0 {
                let dx = self.rng.gen_range(-cfg.jitter_px..=cfg.jitter_px);
                let dy = self.rng.gen_range(-cfg.jitter_px..=cfg.jitter_px);
                d.bbox = d.bbox.translate(dx, dy).clamp_to(side, side);
                if d.bbox.area() <= 0.0 {
                    continue;
                }
            }
            out.push(d);
        }
        if cfg.spurious_rate > 0.0 && self.rng.gen_bool(cfg.spurious_rate) {
            let w = self.rng.gen_range(4.0..=side / 4.0);
            let h = self.rng.gen_range(4.0..=side / 4.0);
            let x = self.rng.gen_range(0.0..=side - w);
            let y = self.rng.gen_range(0.0..=side - h);
            let class_label = ClassLabel::ALL[self.rng.gen_range(0..ClassLabel::ALL.len())];
            out.push(Detection {
                bbox: RectF::new(x, y, w, h),
                class_label,
                score: self.rng.gen_range(0.05..0.95),
            });
        }
        out
    }
}

impl Detector for OracleDetector {
    fn input_side(&self) -> u32 {
        self.input_side
    }

    fn detect(
        &mut self,
        input: &PixelBuffer,
        composite: Option<&CompositeFrame>,
    ) -> Result<Vec<Detection>, DetectorError> {
        check_input(input, self.input_side)?;
        let composite = composite.ok_or(DetectorError::MissingMetadata)?;
        let exact = self.exact(composite);
        if self.config.is_exact() {
            return Ok(exact);
        }
        Ok(self.perturb(exact))
    }
}
