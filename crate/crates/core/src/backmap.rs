//! Translation of detections on a composite back to the scenes the
//! composed crops came from.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::composer::CompositeFrame;
use crate::dataio::{ClassLabel, StreamId};
use crate::detector::Detection;
use crate::geometry::{BoundingBox, RectF};

pub const DEFAULT_MIN_OVERLAP: f64 = 0.5;

/// A detection in the coordinates of its source camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDetection {
    pub composition_id: u64,
    pub stream_id: StreamId,
    pub frame_index: u64,
    pub class_label: ClassLabel,
    pub score: f64,
    pub bbox: BoundingBox,
}

/// Flat CSV record.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    composition_id: u64,
    stream_id: StreamId,
    frame_index: u64,
    class: ClassLabel,
    score: f64,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

impl From<&SceneDetection> for CsvRow {
    fn from(d: &SceneDetection) -> Self {
        Self {
            composition_id: d.composition_id,
            stream_id: d.stream_id.clone(),
            frame_index: d.frame_index,
            class: d.class_label,
            score: d.score,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
        }
    }
}

impl From<CsvRow> for SceneDetection {
    fn from(r: CsvRow) -> Self {
        Self {
            composition_id: r.composition_id,
            stream_id: r.stream_id,
            frame_index: r.frame_index,
            class_label: r.class,
            score: r.score,
            bbox: BoundingBox::new(r.x, r.y, r.w, r.h),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackmapOutcome {
    pub detections: Vec<SceneDetection>,
    /// Detections that overlapped no placement enough to be assigned.
    pub discarded: usize,
}

/// Index of the placement covering the largest share of `det` (canvas
/// coordinates) and that share. Ties go to the lower index.
pub fn assign(det: &RectF, placements: &[BoundingBox]) -> Option<(usize, f64)> {
    let area = det.area();
    if area <= 0.0 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in placements.iter().enumerate() {
        let share = det
            .intersection(&RectF::from(*p))
            .map_or(0.0, |r| r.area() / area);
        if best.is_none_or(|(_, s)| share > s) {
            best = Some((i, share));
        }
    }
    best
}

fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Round a rectangle already inside `bounds` onto the pixel grid without
/// leaving `bounds`.
fn snap_within(r: &RectF, bounds: &BoundingBox) -> BoundingBox {
    let (bx0, by0) = (i64::from(bounds.x), i64::from(bounds.y));
    let (bx1, by1) = (i64::from(bounds.right()), i64::from(bounds.bottom()));
    let x0 = round_half_up(r.x).clamp(bx0, bx1 - 1);
    let y0 = round_half_up(r.y).clamp(by0, by1 - 1);
    let x1 = round_half_up(r.right()).clamp(x0 + 1, bx1);
    let y1 = round_half_up(r.bottom()).clamp(y0 + 1, by1);
    BoundingBox::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32)
}

/// Map `detections` (input coordinates) through `composite`'s placement
/// map. Boxes are scaled by `scale_factor` into canvas coordinates, given
/// to the placement with maximal overlap share, discarded when that share
/// is below `min_overlap`, and otherwise clipped to the placement and
/// shifted into scene coordinates.
pub fn translate(
    detections: &[Detection],
    composite: &CompositeFrame,
    scale_factor: f64,
    min_overlap: f64,
) -> BackmapOutcome {
    assert!(scale_factor > 0.0, "scale factor must be positive");
    let boxes: Vec<BoundingBox> = composite.placements.iter().map(|p| p.composite_box).collect();
    let mut out = BackmapOutcome::default();
    for d in detections {
        let canvas = d.bbox.scale(scale_factor);
        let Some((i, share)) = assign(&canvas, &boxes) else {
            out.discarded += 1;
            continue;
        };
        if share < min_overlap {
            out.discarded += 1;
            continue;
        }
        let p = &composite.placements[i];
        let clipped = canvas
            .intersection(&RectF::from(p.composite_box))
            .expect("positive overlap share");
        let scene = clipped.translate(
            f64::from(p.origin.scene_box.x) - f64::from(p.composite_box.x),
            f64::from(p.origin.scene_box.y) - f64::from(p.composite_box.y),
        );
        out.detections.push(SceneDetection {
            composition_id: composite.composition_id,
            stream_id: p.origin.stream_id.clone(),
            frame_index: p.origin.frame_index,
            class_label: d.class_label,
            score: d.score,
            bbox: snap_within(&scene, &p.origin.scene_box),
        });
    }
    out
}

pub const CSV_HEADER: [&str; 9] = [
    "composition_id",
    "stream_id",
    "frame_index",
    "class",
    "score",
    "x",
    "y",
    "w",
    "h",
];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CsvError + '_ {
    move |source| CsvError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Serialize as CSV text, header first.
pub fn to_csv(detections: &[SceneDetection]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if detections.is_empty() {
        w.write_record(CSV_HEADER).expect("write to memory");
    }
    for d in detections {
        w.serialize(CsvRow::from(d)).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

pub fn write_csv(path: &Path, detections: &[SceneDetection]) -> Result<(), CsvError> {
    std::fs::write(path, to_csv(detections)).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<SceneDetection>, CsvError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize::<CsvRow>()
        .map(|row| row.map(SceneDetection::from))
        .collect::<Result<_, _>>()
        .map_err(csv_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composer::Placement;
    use crate::extract::CropOrigin;
    use crate::raster::PixelBuffer;

    fn placement(scene: BoundingBox, composite: BoundingBox) -> Placement {
        Placement {
            origin: CropOrigin {
                stream_id: StreamId::new("cam"),
                frame_index: 3,
                scene_box: scene,
                arrival_seq: 0,
            },
            composite_box: composite,
        }
    }

    fn frame(placements: Vec<Placement>) -> CompositeFrame {
        CompositeFrame {
            composition_id: 11,
            canvas: PixelBuffer::new(128, 128),
            placements,
            border_width: 2,
            scale_factor: 1.0,
            drain: false,
        }
    }

    fn det(x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection {
            bbox: RectF::new(x, y, w, h),
            class_label: ClassLabel::Person,
            score: 0.75,
        }
    }

    #[test]
    fn covering_detection_maps_to_scene_box() {
        let c = frame(vec![placement(BoundingBox::new(300, 200, 40, 30), BoundingBox::new(2, 2, 40, 30))]);
        let out = translate(&[det(2.0, 2.0, 40.0, 30.0)], &c, 1.0, 0.5);
        assert_eq!(out.detections[0].bbox, BoundingBox::new(300, 200, 40, 30));
        assert_eq!(out.detections[0].composition_id, 11);
        let half = translate(&[det(1.0, 1.0, 20.0, 15.0)], &c, 2.0, 0.5);
        assert_eq!(half.detections[0].bbox, BoundingBox::new(300, 200, 40, 30));
    }

    #[test]
    fn border_detection_is_discarded() {
        let c = frame(vec![placement(BoundingBox::new(0, 0, 40, 30), BoundingBox::new(2, 2, 40, 30))]);
        let out = translate(&[det(42.5, 0.0, 1.5, 40.0)], &c, 1.0, 0.5);
        assert_eq!((out.detections.len(), out.discarded), (0, 1));
        let empty = translate(&[det(0.0, 0.0, 5.0, 5.0)], &frame(vec![]), 1.0, 0.5);
        assert_eq!(empty.discarded, 1);
    }

    #[test]
    fn straddling_detection_goes_to_majority() {
        // Two 50x50 placements side by side; the detection covers 30 px of
        // the left one and 20 px of the right one.
        let c = frame(vec![
            placement(BoundingBox::new(100, 100, 50, 50), BoundingBox::new(0, 0, 50, 50)),
            placement(BoundingBox::new(500, 10, 50, 50), BoundingBox::new(50, 0, 50, 50)),
        ]);
        let out = translate(&[det(20.0, 0.0, 50.0, 50.0)], &c, 1.0, 0.5);
        assert_eq!(out.detections[0].bbox, BoundingBox::new(120, 100, 30, 50));
        let mirrored = translate(&[det(30.0, 0.0, 50.0, 50.0)], &c, 1.0, 0.5);
        assert_eq!(mirrored.detections[0].bbox, BoundingBox::new(500, 10, 30, 50));
    }

    #[test]
    fn ties_go_to_lower_index() {
        let boxes = [BoundingBox::new(0, 0, 10, 10), BoundingBox::new(10, 0, 10, 10)];
        assert_eq!(assign(&RectF::new(5.0, 0.0, 10.0, 10.0), &boxes), Some((0, 0.5)));
    }

    #[test]
    fn csv_round_trip() {
        let d = SceneDetection {
            composition_id: 2,
            stream_id: StreamId::new("cam#1"),
            frame_index: 250,
            class_label: ClassLabel::Car,
            score: 0.1 + 0.2,
            bbox: BoundingBox::new(1, 2, 3, 4),
        };
        let text = to_csv(std::slice::from_ref(&d));
        assert!(text.starts_with("composition_id,stream_id,frame_index,class,score,x,y,w,h\n"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&path, std::slice::from_ref(&d)).unwrap();
        assert_eq!(read_csv(&path).unwrap(), [d]);
    }
}
