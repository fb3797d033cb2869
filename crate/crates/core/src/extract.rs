//! Foreground masks to object boxes and cropped object images.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::dataio::StreamId;
use crate::eval::iou;
use crate::geometry::BoundingBox;
use crate::raster::{BinaryMask, PixelBuffer};

/// Where a crop came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropOrigin {
    pub stream_id: StreamId,
    pub frame_index: u64,
    /// Region in scene coordinates.
    pub scene_box: BoundingBox,
    pub arrival_seq: u64,
}

/// A region of interest cut out of a camera frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectCrop {
    pub origin: CropOrigin,
    pub pixels: PixelBuffer,
}

impl ObjectCrop {
    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn arrival_seq(&self) -> u64 {
        self.origin.arrival_seq
    }

    /// Camera frame the crop belongs to.
    pub fn frame_key(&self) -> (StreamId, u64) {
        (self.origin.stream_id.clone(), self.origin.frame_index)
    }
}

/// Global monotone sequence shared by every producer.
#[derive(Debug, Default)]
pub struct ArrivalCounter(AtomicU64);

impl ArrivalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next(&self) -> u64 {
        self.0.fetch_add(1, Ordering::Relaxed)
    }

    pub fn peek(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Tight bounding boxes of the 8-connected foreground components, ordered
/// by top edge then left edge.
pub fn connected_components(mask: &BinaryMask) -> Vec<BoundingBox> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let data = mask.data();
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut boxes = Vec::new();
    for start in 0..w * h {
        if !data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if data[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        boxes.push(BoundingBox::new(
            x0 as u32,
            y0 as u32,
            (x1 - x0 + 1) as u32,
            (y1 - y0 + 1) as u32,
        ));
    }
    boxes.sort_by_key(BoundingBox::raster_key);
    boxes
}

/// Drop boxes smaller than `min_area`, then merge any pair whose IoU exceeds
/// `merge_iou` into their hull until no such pair remains.
pub fn filter_and_merge(boxes: &[BoundingBox], min_area: u64, merge_iou: f64) -> Vec<BoundingBox> {
    let mut out: Vec<BoundingBox> = boxes.iter().copied().filter(|b| b.area() >= min_area).collect();
    'outer: loop {
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                if iou(&out[i], &out[j]) > merge_iou {
                    let merged = out[i].hull(&out[j]);
                    out.swap_remove(j);
                    out[i] = merged;
                    continue 'outer;
                }
            }
        }
        break;
    }
    out.sort_by_key(BoundingBox::raster_key);
    out
}

/// Crops produced from one frame plus the boxes that were empty after
/// clamping.
#[derive(Debug, Clone, Default)]
pub struct CropBatch {
    pub crops: Vec<ObjectCrop>,
    pub skipped: usize,
}

/// Cut `boxes` (clamped to the frame) out of `frame`, assigning arrival
/// numbers in box order.
pub fn crop_objects(
    frame: &PixelBuffer,
    stream_id: &StreamId,
    frame_index: u64,
    boxes: &[BoundingBox],
    counter: &ArrivalCounter,
) -> CropBatch {
    let mut batch = CropBatch::default();
    for b in boxes {
        let Some(scene_box) = b.clamp_to(frame.width(), frame.height()) else {
            batch.skipped += 1;
            continue;
        };
        batch.crops.push(ObjectCrop {
            origin: CropOrigin {
                stream_id: stream_id.clone(),
                frame_index,
                scene_box,
                arrival_seq: counter.next(),
            },
            pixels: frame.crop(&scene_box),
        });
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_has_no_components() {
        assert!(connected_components(&BinaryMask::new(10, 10)).is_empty());
    }

    #[test]
    fn single_block() {
        let mut m = BinaryMask::new(30, 30);
        m.fill_rect(&BoundingBox::new(5, 5, 10, 10));
        assert_eq!(connected_components(&m), [BoundingBox::new(5, 5, 10, 10)]);
    }

    #[test]
    fn diagonal_neighbours_join() {
        let mut m = BinaryMask::new(2, 2);
        m.set(0, 0, true);
        m.set(1, 1, true);
        assert_eq!(connected_components(&m), [BoundingBox::new(0, 0, 2, 2)]);
        let mut anti = BinaryMask::new(2, 2);
        anti.set(1, 0, true);
        anti.set(0, 1, true);
        assert_eq!(connected_components(&anti), [BoundingBox::new(0, 0, 2, 2)]);
    }

    #[test]
    fn components_are_raster_ordered() {
        let mut m = BinaryMask::new(20, 20);
        m.fill_rect(&BoundingBox::new(12, 2, 3, 3));
        m.fill_rect(&BoundingBox::new(1, 2, 3, 3));
        m.fill_rect(&BoundingBox::new(0, 10, 3, 3));
        assert_eq!(
            connected_components(&m),
            [
                BoundingBox::new(1, 2, 3, 3),
                BoundingBox::new(12, 2, 3, 3),
                BoundingBox::new(0, 10, 3, 3)
            ]
        );
    }

    #[test]
    fn filter_and_merge_examples() {
        assert!(filter_and_merge(&[BoundingBox::new(0, 0, 10, 10)], 400, 0.0).is_empty());
        let merged = filter_and_merge(
            &[BoundingBox::new(0, 0, 10, 10), BoundingBox::new(5, 5, 10, 10)],
            1,
            0.0,
        );
        assert_eq!(merged, [BoundingBox::new(0, 0, 15, 15)]);
        let disjoint = [BoundingBox::new(0, 0, 5, 5), BoundingBox::new(10, 10, 5, 5)];
        assert_eq!(filter_and_merge(&disjoint, 1, 0.0), disjoint);
    }

    #[test]
    fn merge_reaches_fixed_point_through_chains() {
        // a and b only join through c.
        let boxes = [
            BoundingBox::new(0, 0, 10, 10),
            BoundingBox::new(20, 0, 10, 10),
            BoundingBox::new(8, 0, 14, 4),
        ];
        let once = filter_and_merge(&boxes, 1, 0.0);
        assert_eq!(once, [BoundingBox::new(0, 0, 30, 10)]);
        assert_eq!(filter_and_merge(&once, 1, 0.0), once);
    }

    #[test]
    fn cropping_examples() {
        let mut frame = PixelBuffer::new(20, 10);
        for y in 0..10 {
            for x in 0..20 {
                frame.put(x, y, [x as u8, y as u8, 7]);
            }
        }
        let counter = ArrivalCounter::new();
        let sid = StreamId::new("s");
        let full = crop_objects(&frame, &sid, 0, &[BoundingBox::new(0, 0, 20, 10)], &counter);
        assert_eq!(full.crops[0].pixels, frame);
        let tiny = crop_objects(&frame, &sid, 0, &[BoundingBox::new(0, 0, 1, 1)], &counter);
        assert_eq!(tiny.crops[0].pixels.data(), &[0, 0, 7]);
        let clamped = crop_objects(&frame, &sid, 0, &[BoundingBox::new(12, 2, 13, 4)], &counter);
        assert_eq!(clamped.crops[0].origin.scene_box, BoundingBox::new(12, 2, 8, 4));
        let outside = crop_objects(&frame, &sid, 0, &[BoundingBox::new(25, 2, 3, 3)], &counter);
        assert_eq!((outside.crops.len(), outside.skipped), (0, 1));
        assert_eq!(counter.peek(), 3);
        assert_eq!(clamped.crops[0].origin.arrival_seq, 2);
    }
}
