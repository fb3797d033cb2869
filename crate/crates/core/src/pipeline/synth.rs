//! Deterministic synthetic static-camera scenes with exact annotations.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{write_annotations, write_image, Annotation, ClassLabel, DataError, StreamId};
use crate::geometry::BoundingBox;
use crate::raster::PixelBuffer;

/// How moving rectangles are arranged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One horizontal lane per object; objects never overlap.
    Lanes,
    /// Free 2-D motion bouncing off the frame edges; objects may overlap.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Png => "png",
            Self::Ppm => "ppm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub frames: u64,
    pub objects: usize,
    pub static_objects: usize,
    /// Target fraction of the frame covered by moving objects; picks the
    /// object size when set.
    pub area_fraction: Option<f64>,
    /// Speed range in pixels per frame.
    pub min_speed: f64,
    pub max_speed: f64,
    /// Per-channel uniform noise amplitude in gray levels.
    pub noise: u8,
    pub layout: Layout,
    pub format: ImageFormat,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            frames: 500,
            objects: 6,
            static_objects: 0,
            area_fraction: None,
            min_speed: 2.0,
            max_speed: 6.0,
            noise: 2,
            layout: Layout::Lanes,
            format: ImageFormat::Png,
            seed: 1,
        }
    }
}

/// One rectangle's trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mover {
    pub object_id: i64,
    pub class_label: ClassLabel,
    pub w: u32,
    pub h: u32,
    pub x0: f64,
    pub y0: f64,
    pub vx: f64,
    pub vy: f64,
    pub color: [u8; 3],
}

/// Position of a point bouncing inside `[0, span]`.
fn bounce(start: f64, velocity: f64, t: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * span;
    let p = (start + velocity * t).rem_euclid(period);
    if p <= span {
        p
    } else {
        period - p
    }
}

impl Mover {
    pub fn box_at(&self, frame: u64, width: u32, height: u32) -> BoundingBox {
        let t = frame as f64;
        let x = bounce(self.x0, self.vx, t, f64::from(width - self.w)).round() as u32;
        let y = bounce(self.y0, self.vy, t, f64::from(height - self.h)).round() as u32;
        BoundingBox::new(x, y, self.w, self.h)
    }

    pub fn is_static(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0
    }
}

/// Bright saturated colors, all well above the background luma range.
const PALETTE: [[u8; 3]; 6] = [
    [255, 230, 40],
    [40, 255, 230],
    [255, 120, 255],
    [250, 250, 250],
    [160, 255, 90],
    [255, 190, 150],
];

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SynthSpec,
    pub movers: Vec<Mover>,
    background: PixelBuffer,
}

fn textured_background(width: u32, height: u32, rng: &mut ChaCha8Rng) -> PixelBuffer {
    let phase: [f64; 3] = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
    let mut bg = PixelBuffer::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (f64::from(x), f64::from(y));
            let mut px = [0u8; 3];
            for (c, v) in px.iter_mut().enumerate() {
                let s = (fx / (31.0 + 7.0 * c as f64) + phase[c]).sin()
                    + (fy / (23.0 + 5.0 * c as f64) - phase[c]).cos()
                    + 0.5 * ((fx + fy) / 57.0).sin();
                *v = (80.0 + 16.0 * s).round().clamp(0.0, 255.0) as u8;
            }
            bg.put(x, y, px);
        }
    }
    bg
}

impl SyntheticScene {
    pub fn new(spec: SynthSpec) -> Self {
        assert!(spec.width >= 16 && spec.height >= 16, "frame too small");
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let background = textured_background(spec.width, spec.height, &mut rng);
        let n = spec.objects.max(1);
        let lane_h = spec.height / n as u32;
        let target_side = spec.area_fraction.map(|f| {
            (f * f64::from(spec.width) * f64::from(spec.height) / n as f64).sqrt()
        });
        let mut movers = Vec::new();
        for i in 0..spec.objects {
            let (w, h) = match (spec.layout, target_side) {
                (Layout::Lanes, Some(s)) => {
                    let h = (s.round() as u32).clamp(2, lane_h.saturating_sub(4).max(2));
                    let area = s * s;
                    let w = ((area / f64::from(h)).round() as u32).clamp(2, spec.width / 2);
                    (w, h)
                }
                (Layout::Lanes, None) => {
                    let h = rng.gen_range(lane_h.saturating_sub(4).max(2) / 2..=lane_h.saturating_sub(4).max(2));
                    (rng.gen_range(30..=90).min(spec.width / 2), h)
                }
                (Layout::Free, Some(s)) => {
                    let s = (s.round() as u32).clamp(2, spec.width.min(spec.height) / 2);
                    (s, s)
                }
                (Layout::Free, None) => (
                    rng.gen_range(24..=72).min(spec.width / 2),
                    rng.gen_range(24..=72).min(spec.height / 2),
                ),
            };
            let speed = rng.gen_range(spec.min_speed..=spec.max_speed);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let (x0, y0, vx, vy) = match spec.layout {
                Layout::Lanes => {
                    let y = i as u32 * lane_h + (lane_h - h) / 2;
                    (
                        rng.gen_range(0.0..=f64::from(spec.width - w)),
                        f64::from(y),
                        sign * speed,
                        0.0,
                    )
                }
                Layout::Free => {
                    let angle = rng.gen_range(0.0..TAU);
                    (
                        rng.gen_range(0.0..=f64::from(spec.width - w)),
                        rng.gen_range(0.0..=f64::from(spec.height - h)),
                        speed * angle.cos(),
                        speed * angle.sin(),
                    )
                }
            };
            movers.push(Mover {
                object_id: i as i64 + 1,
                class_label: ClassLabel::ALL[i % ClassLabel::ALL.len()],
                w,
                h,
                x0,
                y0,
                vx,
                vy,
                color: PALETTE[i % PALETTE.len()],
            });
        }
        for j in 0..spec.static_objects {
            let (w, h) = (
                rng.gen_range(20..=60).min(spec.width / 4),
                rng.gen_range(20..=60).min(spec.height / 4),
            );
            movers.push(Mover {
                object_id: (spec.objects + j) as i64 + 1,
                class_label: ClassLabel::Object,
                w,
                h,
                x0: f64::from(rng.gen_range(0..=spec.width - w)),
                y0: f64::from(rng.gen_range(0..=spec.height - h)),
                vx: 0.0,
                vy: 0.0,
                color: [30, 30, 200],
            });
        }
        Self {
            spec,
            movers,
            background,
        }
    }

    pub fn background(&self) -> &PixelBuffer {
        &self.background
    }

    /// Ground truth boxes at `frame`.
    pub fn boxes_at(&self, frame: u64) -> Vec<(&Mover, BoundingBox)> {
        self.movers
            .iter()
            .map(|m| (m, m.box_at(frame, self.spec.width, self.spec.height)))
            .collect()
    }

    /// Boxes of moving objects only.
    pub fn moving_boxes_at(&self, frame: u64) -> Vec<BoundingBox> {
        self.boxes_at(frame)
            .into_iter()
            .filter(|(m, _)| !m.is_static())
            .map(|(_, b)| b)
            .collect()
    }

    pub fn render(&self, frame: u64) -> PixelBuffer {
        let mut img = self.background.clone();
        // Static distractors first so moving objects are drawn over them.
        for (m, b) in self.boxes_at(frame).into_iter().rev() {
            img.fill_rect(&b, m.color);
        }
        if self.spec.noise > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let a = i16::from(self.spec.noise);
            for v in img.data_mut() {
                let n = rng.gen_range(-a..=a);
                *v = (i16::from(*v) + n).clamp(0, 255) as u8;
            }
        }
        img
    }

    pub fn annotations(&self, stream_id: &StreamId) -> Vec<Annotation> {
        let mut out = Vec::new();
        for f in 0..self.spec.frames {
            for (m, b) in self.boxes_at(f) {
                out.push(Annotation {
                    stream_id: stream_id.clone(),
                    frame_index: f,
                    object_id: m.object_id,
                    duration: self.spec.frames as i64,
                    class_label: m.class_label,
                    bbox: b,
                });
            }
        }
        out
    }

    /// Mean fraction of the frame covered by moving objects.
    pub fn moving_area_fraction(&self) -> f64 {
        let frame = f64::from(self.spec.width) * f64::from(self.spec.height);
        let moving: u64 = self
            .movers
            .iter()
            .filter(|m| !m.is_static())
            .map(|m| u64::from(m.w) * u64::from(m.h))
            .sum();
        moving as f64 / frame
    }
}

/// Summary of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub stream_dir: PathBuf,
    pub stream_id: StreamId,
    pub frames: u64,
    pub annotations: usize,
    pub moving_area_fraction: f64,
}

/// Write `<root>/<stream_id>/frames/NNNNNN.<ext>` and `annotations.txt`.
pub fn gen_synthetic(spec: &SynthSpec, root: &Path, stream_id: &str) -> Result<SynthDataset, DataError> {
    let scene = SyntheticScene::new(spec.clone());
    let stream_dir = root.join(stream_id);
    let frames_dir = stream_dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|source| DataError::Io {
        path: frames_dir.clone(),
        source,
    })?;
    for f in 0..spec.frames {
        let path = frames_dir.join(format!("{f:06}.{}", spec.format.extension()));
        write_image(&path, &scene.render(f))?;
    }
    let sid = StreamId::new(stream_id);
    let annotations = scene.annotations(&sid);
    write_annotations(&stream_dir.join("annotations.txt"), &annotations)?;
    Ok(SynthDataset {
        stream_dir,
        stream_id: sid,
        frames: spec.frames,
        annotations: annotations.len(),
        moving_area_fraction: scene.moving_area_fraction(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{curate_annotations, CurationConfig};

    #[test]
    fn bounce_stays_in_range() {
        for t in 0..200 {
            let p = bounce(3.0, -7.5, f64::from(t), 50.0);
            assert!((0.0..=50.0).contains(&p));
        }
        assert_eq!(bounce(0.0, 5.0, 4.0, 100.0), 20.0);
        assert_eq!(bounce(0.0, 5.0, 22.0, 100.0), 90.0);
    }

    #[test]
    fn lanes_never_overlap() {
        let scene = SyntheticScene::new(SynthSpec::default());
        for f in (0..500).step_by(7) {
            let boxes = scene.moving_boxes_at(f);
            assert_eq!(boxes.len(), 6);
            for (i, a) in boxes.iter().enumerate() {
                assert!(a.right() <= 640 && a.bottom() <= 480);
                for b in &boxes[i + 1..] {
                    assert_eq!(a.intersection_area(b), 0);
                }
            }
        }
    }

    #[test]
    fn constant_velocity_advances_linearly() {
        let spec = SynthSpec {
            objects: 1,
            min_speed: 5.0,
            max_speed: 5.0,
            ..SynthSpec::default()
        };
        let mut scene = SyntheticScene::new(spec);
        scene.movers[0].x0 = 10.0;
        scene.movers[0].vx = 5.0;
        let xs: Vec<u32> = (0..5).map(|f| scene.moving_boxes_at(f)[0].x).collect();
        assert_eq!(xs, [10, 15, 20, 25, 30]);
    }

    #[test]
    fn static_distractor_is_curated_away() {
        let spec = SynthSpec {
            objects: 2,
            static_objects: 1,
            frames: 60,
            ..SynthSpec::default()
        };
        let scene = SyntheticScene::new(spec);
        let sid = StreamId::new("s");
        let all = scene.annotations(&sid);
        let kept = curate_annotations(&all, &CurationConfig::default()).unwrap();
        assert!(kept.iter().all(|a| a.object_id != 3));
        assert_eq!(kept.len(), 2 * 60);
    }

    #[test]
    fn area_fraction_drives_size() {
        let spec = SynthSpec {
            area_fraction: Some(0.02),
            ..SynthSpec::default()
        };
        let f = SyntheticScene::new(spec).moving_area_fraction();
        assert!((f - 0.02).abs() < 0.002, "{f}");
    }

    #[test]
    fn rendering_is_deterministic_and_noise_bounded() {
        let scene = SyntheticScene::new(SynthSpec::default());
        assert_eq!(scene.render(3), scene.render(3));
        let clean = SyntheticScene::new(SynthSpec {
            noise: 0,
            ..SynthSpec::default()
        })
        .render(3);
        let noisy = scene.render(3);
        let max = clean
            .data()
            .iter()
            .zip(noisy.data())
            .map(|(&a, &b)| (i16::from(a) - i16::from(b)).abs())
            .max()
            .unwrap();
        assert!(max <= 2);
    }
}
