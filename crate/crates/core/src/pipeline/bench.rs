//! Latency harnesses for background subtraction and composition.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bgs::{BgsConfig, BgsError, BgsMethod, Subtractor};
use crate::composer::{compose, side_lower_bound, CompositionPolicy, Pool};
use crate::dataio::StreamId;
use crate::eval::LatencySummary;
use crate::extract::{ArrivalCounter, CropOrigin, ObjectCrop};
use crate::geometry::BoundingBox;
use crate::raster::PixelBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgsBenchRow {
    pub method: BgsMethod,
    pub width: u32,
    pub height: u32,
    pub latency: LatencySummary,
}

/// Per-frame mask latency of each method on the same `(frame_index, frame)`
/// sequence, single-threaded. The first frame only initializes the model
/// and is not timed.
pub fn bench_bgs(
    frames: &[(u64, PixelBuffer)],
    config: &BgsConfig,
    methods: &[BgsMethod],
) -> Result<Vec<BgsBenchRow>, BgsError> {
    let (width, height) = frames.first().map_or((0, 0), |(_, f)| f.dims());
    let mut rows = Vec::new();
    for &method in methods {
        let cfg = BgsConfig {
            method,
            ..config.clone()
        };
        let mut sub = Subtractor::new(&cfg)?;
        let mut samples = Vec::with_capacity(frames.len());
        for (i, (index, frame)) in frames.iter().enumerate() {
            let t = Instant::now();
            let mask = sub.process(*index, frame, &cfg)?;
            let ms = t.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(mask);
            if i > 0 {
                samples.push(ms);
            }
        }
        rows.push(BgsBenchRow {
            method,
            width,
            height,
            latency: LatencySummary::from_samples(&samples),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeBenchSpec {
    pub object_counts: Vec<usize>,
    pub min_side: u32,
    pub max_side: u32,
    pub repeats: usize,
    pub border: u32,
    pub seed: u64,
}

impl Default for ComposeBenchSpec {
    fn default() -> Self {
        Self {
            object_counts: vec![1, 2, 4, 8, 16, 32, 64, 100],
            min_side: 20,
            max_side: 120,
            repeats: 5,
            border: 2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeBenchPoint {
    pub objects: usize,
    pub canvas_side: u32,
    /// `ceil(sqrt(sum of bordered crop areas))`, the side no packing can beat.
    pub lower_bound_side: u32,
    pub compose_ms: f64,
}

/// Random crops of one camera frame composed in a single unlimited elastic
/// composition.
pub fn random_crops(rng: &mut ChaCha8Rng, n: usize, min_side: u32, max_side: u32) -> Vec<ObjectCrop> {
    let counter = ArrivalCounter::new();
    let sid = StreamId::new("bench");
    (0..n)
        .map(|_| {
            let w = rng.gen_range(min_side..=max_side);
            let h = rng.gen_range(min_side..=max_side);
            let shade = rng.gen_range(64..=255u8);
            ObjectCrop {
                origin: CropOrigin {
                    stream_id: sid.clone(),
                    frame_index: 0,
                    scene_box: BoundingBox::new(0, 0, w, h),
                    arrival_seq: counter.next(),
                },
                pixels: PixelBuffer::filled(w, h, [shade, shade / 2, 255 - shade]),
            }
        })
        .collect()
}

pub fn bench_compose(spec: &ComposeBenchSpec) -> Vec<ComposeBenchPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let policy = CompositionPolicy::Elastic { max_frames: 1 };
    let mut out = Vec::new();
    for &n in &spec.object_counts {
        for _ in 0..spec.repeats {
            let crops = random_crops(&mut rng, n, spec.min_side, spec.max_side);
            let bordered: Vec<(u32, u32)> = crops
                .iter()
                .map(|c| (c.width() + 2 * spec.border, c.height() + 2 * spec.border))
                .collect();
            let mut pool = Pool::with_capacity(n.max(1));
            for c in crops {
                pool.enqueue(c);
            }
            let t = Instant::now();
            let composite = compose(&mut pool, &policy, spec.border, 0).expect("non-empty pool");
            let compose_ms = t.elapsed().as_secs_f64() * 1e3;
            out.push(ComposeBenchPoint {
                objects: n,
                canvas_side: composite.canvas_side(),
                lower_bound_side: side_lower_bound(&bordered),
                compose_ms,
            });
        }
    }
    out
}

/// Mean composition time per object count, in ascending count order.
pub fn mean_by_count(points: &[ComposeBenchPoint]) -> Vec<(usize, f64)> {
    let mut counts: Vec<usize> = points.iter().map(|p| p.objects).collect();
    counts.sort_unstable();
    counts.dedup();
    counts
        .into_iter()
        .map(|n| {
            let v: Vec<f64> = points.iter().filter(|p| p.objects == n).map(|p| p.compose_ms).collect();
            (n, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

pub fn compose_points_csv(points: &[ComposeBenchPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_object_gets_minimal_canvas() {
        let spec = ComposeBenchSpec {
            object_counts: vec![1],
            repeats: 3,
            ..ComposeBenchSpec::default()
        };
        for p in bench_compose(&spec) {
            assert_eq!(p.canvas_side, p.lower_bound_side.div_ceil(32) * 32);
        }
    }

    #[test]
    fn hundred_crops_within_twice_the_area_bound() {
        let spec = ComposeBenchSpec {
            object_counts: vec![100],
            repeats: 3,
            ..ComposeBenchSpec::default()
        };
        for p in bench_compose(&spec) {
            assert!(p.canvas_side <= 2 * p.lower_bound_side, "{p:?}");
        }
    }

    #[test]
    fn bgs_bench_reports_every_method() {
        let frames: Vec<(u64, PixelBuffer)> =
            (0..4).map(|i| (i * 10, PixelBuffer::filled(32, 24, [90, 90, 90]))).collect();
        let rows = bench_bgs(&frames, &BgsConfig::default(), &BgsMethod::ALL).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.latency.count == 3 && r.latency.mean_ms >= 0.0));
    }
}
