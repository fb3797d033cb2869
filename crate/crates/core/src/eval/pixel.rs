use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;

/// Pixel tallies for extraction quality; additive across frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelCounts {
    pub extracted: u64,
    pub ground_truth: u64,
    pub intersection: u64,
}

impl PixelCounts {
    /// Reported as 1.0 when nothing was extracted.
    pub fn precision(&self) -> f64 {
        if self.extracted == 0 {
            1.0
        } else {
            self.intersection as f64 / self.extracted as f64
        }
    }

    /// Reported as 1.0 when there is no ground truth.
    pub fn recall(&self) -> f64 {
        if self.ground_truth == 0 {
            1.0
        } else {
            self.intersection as f64 / self.ground_truth as f64
        }
    }

    pub fn zero_extraction(&self) -> bool {
        self.extracted == 0
    }

    pub fn zero_ground_truth(&self) -> bool {
        self.ground_truth == 0
    }

    pub fn add(&mut self, other: PixelCounts) {
        self.extracted += other.extracted;
        self.ground_truth += other.ground_truth;
        self.intersection += other.intersection;
    }
}

/// Area of the union of `boxes`, via coordinate compression.
pub fn union_area(boxes: &[BoundingBox]) -> u64 {
    if boxes.is_empty() {
        return 0;
    }
    let mut xs: Vec<u32> = boxes.iter().flat_map(|b| [b.x, b.right()]).collect();
    let mut ys: Vec<u32> = boxes.iter().flat_map(|b| [b.y, b.bottom()]).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let mut covered = vec![false; nx * ny];
    for b in boxes {
        let x0 = xs.binary_search(&b.x).expect("edge is a breakpoint");
        let x1 = xs.binary_search(&b.right()).expect("edge is a breakpoint");
        let y0 = ys.binary_search(&b.y).expect("edge is a breakpoint");
        let y1 = ys.binary_search(&b.bottom()).expect("edge is a breakpoint");
        for j in y0..y1 {
            covered[j * nx + x0..j * nx + x1].fill(true);
        }
    }
    let mut area = 0u64;
    for j in 0..ny {
        let dy = u64::from(ys[j + 1] - ys[j]);
        for i in 0..nx {
            if covered[j * nx + i] {
                area += dy * u64::from(xs[i + 1] - xs[i]);
            }
        }
    }
    area
}

/// Pixel-set precision and recall of extracted boxes against ground-truth
/// boxes on a `width × height` frame. Overlaps are counted once.
pub fn pixel_precision_recall(
    extracted: &[BoundingBox],
    gt: &[BoundingBox],
    (width, height): (u32, u32),
) -> PixelCounts {
    let clip = |v: &[BoundingBox]| -> Vec<BoundingBox> {
        v.iter().filter_map(|b| b.clamp_to(width, height)).collect()
    };
    let e = clip(extracted);
    let g = clip(gt);
    let pairs: Vec<BoundingBox> = e
        .iter()
        .flat_map(|a| g.iter().filter_map(move |b| a.intersection(b)))
        .collect();
    PixelCounts {
        extracted: union_area(&e),
        ground_truth: union_area(&g),
        intersection: union_area(&pairs),
    }
}
