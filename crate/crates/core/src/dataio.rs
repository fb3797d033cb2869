//! Frame sequences on disk, object annotations, and annotation curation.
//!
//! A dataset root holds one directory per stream:
//!
//! ```text
//! <root>/<stream_id>/frames/000000.png
//! <root>/<stream_id>/frames/000001.png
//! <root>/<stream_id>/annotations.txt
//! ```
//!
//! Annotation files use the eight-column object layout
//! `object_id duration frame_index left top width height class_code`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;
use crate::raster::{BinaryMask, PixelBuffer};

/// Opaque stream identifier, cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StreamId(Arc<str>);

impl StreamId {
    pub fn new(id: impl AsRef<str>) -> Self {
        Self(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Identifier for replica `index` of this stream.
    pub fn replica(&self, index: usize) -> Self {
        Self::new(format!("{}#{index}", self.0))
    }

    /// The stream a replica was cloned from (itself when not a replica).
    pub fn base(&self) -> Self {
        match self.0.rsplit_once('#') {
            Some((base, idx)) if !base.is_empty() && idx.parse::<usize>().is_ok() => {
                Self::new(base)
            }
            _ => self.clone(),
        }
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StreamId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// Object classes present in the annotation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Person,
    Car,
    Vehicle,
    Object,
    Bike,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::Person,
        ClassLabel::Car,
        ClassLabel::Vehicle,
        ClassLabel::Object,
        ClassLabel::Bike,
    ];

    /// Column-8 class code: 1..=5 in the order person, car, vehicle, object, bike.
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(Self::Person),
            2 => Some(Self::Car),
            3 => Some(Self::Vehicle),
            4 => Some(Self::Object),
            5 => Some(Self::Bike),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Self::Person => 1,
            Self::Car => 2,
            Self::Vehicle => 3,
            Self::Object => 4,
            Self::Bike => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Person => "person",
            Self::Car => "car",
            Self::Vehicle => "vehicle",
            Self::Object => "object",
            Self::Bike => "bike",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown class label `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub stream_id: StreamId,
    pub frame_index: u64,
    pub pixels: PixelBuffer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub stream_id: StreamId,
    pub frame_index: u64,
    pub object_id: i64,
    /// Track length column carried through unchanged.
    pub duration: i64,
    pub class_label: ClassLabel,
    pub bbox: BoundingBox,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("cannot encode image {path}: {message}")]
    Encode { path: PathBuf, message: String },
    #[error("frame {path} is {found:?}, earlier frames are {expected:?}; the camera must be static")]
    DimensionChange {
        path: PathBuf,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("frame skip must be at least 1")]
    InvalidSkip,
    #[error("{path}:{line}: expected 8 columns, found {found}")]
    ColumnCount {
        path: String,
        line: usize,
        found: usize,
    },
    #[error("{path}:{line}: column {column} is not an integer: `{value}`")]
    NotInteger {
        path: String,
        line: usize,
        column: usize,
        value: String,
    },
    #[error("invalid curation configuration: {0}")]
    InvalidCuration(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_image(path: &Path) -> Result<PixelBuffer, DataError> {
    let img = image::open(path).map_err(|e| DataError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    PixelBuffer::from_raw(w, h, rgb.into_raw()).map_err(|e| DataError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Encode by extension (`.png`, `.ppm`).
pub fn write_image(path: &Path, pixels: &PixelBuffer) -> Result<(), DataError> {
    let buf = image::RgbImage::from_raw(pixels.width(), pixels.height(), pixels.data().to_vec())
        .expect("PixelBuffer length invariant");
    buf.save(path).map_err(|e| DataError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Write a mask as a monochrome image (foreground white).
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), DataError> {
    let data = mask.data().iter().map(|&v| if v { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width(), mask.height(), data)
        .expect("BinaryMask length invariant");
    buf.save(path).map_err(|e| DataError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Numbered still images in `dir`, sorted by their numeric file stem.
pub fn list_frames(dir: &Path) -> Result<Vec<(u64, PathBuf)>, DataError> {
    if !dir.is_dir() {
        return Err(DataError::MissingDirectory(dir.to_path_buf()));
    }
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "png"));
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok());
        if let (true, Some(index)) = (ext_ok, index) {
            frames.push((index, path));
        }
    }
    frames.sort();
    Ok(frames)
}

/// Lazily decoded, subsampled frame stream. See [`load_sequence`].
#[derive(Debug)]
pub struct SequenceReader {
    stream_id: StreamId,
    files: Vec<(u64, PathBuf)>,
    next: usize,
    skip: usize,
    dims: Option<(u32, u32)>,
    failed: bool,
}

impl SequenceReader {
    /// Number of frames this reader will yield.
    pub fn len(&self) -> usize {
        self.files.len().div_ceil(self.skip)
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Total frames on disk before subsampling.
    pub fn source_len(&self) -> usize {
        self.files.len()
    }
}

impl Iterator for SequenceReader {
    type Item = Result<FrameRecord, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.next >= self.files.len() {
            return None;
        }
        let (frame_index, path) = &self.files[self.next];
        self.next += self.skip;
        let pixels = match read_image(path) {
            Ok(p) => p,
            Err(e) => {
                self.failed = true;
                return Some(Err(e));
            }
        };
        match self.dims {
            None => self.dims = Some(pixels.dims()),
            Some(expected) if expected != pixels.dims() => {
                self.failed = true;
                return Some(Err(DataError::DimensionChange {
                    path: path.clone(),
                    expected,
                    found: pixels.dims(),
                }));
            }
            Some(_) => {}
        }
        Some(Ok(FrameRecord {
            stream_id: self.stream_id.clone(),
            frame_index: *frame_index,
            pixels,
        }))
    }
}

/// Every `skip`-th frame of the numbered images in `dir`. Frame indices are
/// taken from the zero-padded file names, so they refer to the original
/// sequence position rather than the subsampled one.
pub fn load_sequence(
    dir: &Path,
    stream_id: StreamId,
    skip: usize,
) -> Result<SequenceReader, DataError> {
    if skip == 0 {
        return Err(DataError::InvalidSkip);
    }
    let files = list_frames(dir)?;
    Ok(SequenceReader {
        stream_id,
        files,
        next: 0,
        skip,
        dims: None,
        failed: false,
    })
}

/// Output of [`parse_annotations`] with the counts of rejected lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedAnnotations {
    pub annotations: Vec<Annotation>,
    pub skipped_unknown_class: usize,
    pub skipped_bad_size: usize,
}

pub fn parse_annotations(path: &Path, stream_id: StreamId) -> Result<ParsedAnnotations, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_annotations_str(&text, stream_id, &path.display().to_string())
}

/// Parse annotation text; `origin` names the source in error messages.
pub fn parse_annotations_str(
    text: &str,
    stream_id: StreamId,
    origin: &str,
) -> Result<ParsedAnnotations, DataError> {
    let mut out = ParsedAnnotations::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 8 {
            return Err(DataError::ColumnCount {
                path: origin.to_string(),
                line: line_no,
                found: cols.len(),
            });
        }
        let mut v = [0i64; 8];
        for (column, (slot, raw)) in v.iter_mut().zip(&cols).enumerate() {
            *slot = raw.parse().map_err(|_| DataError::NotInteger {
                path: origin.to_string(),
                line: line_no,
                column: column + 1,
                value: raw.to_string(),
            })?;
        }
        let [object_id, duration, frame, left, top, width, height, code] = v;
        if width <= 0 || height <= 0 || frame < 0 {
            out.skipped_bad_size += 1;
            continue;
        }
        let Some(class_label) = ClassLabel::from_code(code) else {
            out.skipped_unknown_class += 1;
            continue;
        };
        // Boxes hanging past the top/left edge are clipped to the frame origin.
        let x1 = left + width;
        let y1 = top + height;
        let (x0, y0) = (left.max(0), top.max(0));
        if x1 <= x0 || y1 <= y0 {
            out.skipped_bad_size += 1;
            continue;
        }
        out.annotations.push(Annotation {
            stream_id: stream_id.clone(),
            frame_index: frame as u64,
            object_id,
            duration,
            class_label,
            bbox: BoundingBox::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32),
        });
    }
    if out.skipped_unknown_class + out.skipped_bad_size > 0 {
        log::warn!(
            "{origin}: skipped {} lines with unknown class and {} with invalid size",
            out.skipped_unknown_class,
            out.skipped_bad_size
        );
    }
    Ok(out)
}

pub fn format_annotations(annotations: &[Annotation]) -> String {
    let mut s = String::new();
    for a in annotations {
        s.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            a.object_id,
            a.duration,
            a.frame_index,
            a.bbox.x,
            a.bbox.y,
            a.bbox.w,
            a.bbox.h,
            a.class_label.code()
        ));
    }
    s
}

pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<(), DataError> {
    fs::write(path, format_annotations(annotations)).map_err(io_err(path))
}

/// Parameters of the static-object removal rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurationConfig {
    /// Distance in frames between the two boxes compared.
    pub lookback: i64,
    /// Objects static on at least this fraction of comparable frames are removed.
    pub static_fraction: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            lookback: 10,
            static_fraction: 0.9,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.lookback <= 0 {
            return Err(DataError::InvalidCuration(format!(
                "lookback must be positive, got {}",
                self.lookback
            )));
        }
        if !(self.static_fraction > 0.0 && self.static_fraction <= 1.0) {
            return Err(DataError::InvalidCuration(format!(
                "static fraction must lie in (0, 1], got {}",
                self.static_fraction
            )));
        }
        Ok(())
    }
}

/// Per-object static statistics used by [`curate_annotations`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StaticCount {
    pub comparable: usize,
    pub static_frames: usize,
}

/// Count, for every `(stream, object)`, the frames whose box equals the box
/// `lookback` frames earlier.
pub fn static_counts(
    annotations: &[Annotation],
    lookback: u64,
) -> HashMap<(StreamId, i64), StaticCount> {
    let mut tracks: HashMap<(StreamId, i64), BTreeMap<u64, BoundingBox>> = HashMap::new();
    for a in annotations {
        tracks
            .entry((a.stream_id.clone(), a.object_id))
            .or_default()
            .insert(a.frame_index, a.bbox);
    }
    tracks
        .into_iter()
        .map(|(key, track)| {
            let mut count = StaticCount::default();
            for (&frame, bbox) in &track {
                let Some(earlier) = frame.checked_sub(lookback).and_then(|f| track.get(&f)) else {
                    continue;
                };
                count.comparable += 1;
                if earlier == bbox {
                    count.static_frames += 1;
                }
            }
            (key, count)
        })
        .collect()
}

/// Drop every object that stayed in place on at least `static_fraction` of
/// its comparable frames. Objects with fewer than two comparable frames are
/// kept. The relative order of the surviving annotations is preserved.
pub fn curate_annotations(
    annotations: &[Annotation],
    config: &CurationConfig,
) -> Result<Vec<Annotation>, DataError> {
    config.validate()?;
    let counts = static_counts(annotations, config.lookback as u64);
    let removed = |key: &(StreamId, i64)| {
        counts.get(key).is_some_and(|c| {
            c.comparable >= 2
                && c.static_frames as f64 >= config.static_fraction * c.comparable as f64 - 1e-9
        })
    };
    Ok(annotations
        .iter()
        .filter(|a| !removed(&(a.stream_id.clone(), a.object_id)))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceInfo {
    pub stream_id: StreamId,
    pub frame_count: u64,
}

/// A sequence retained for evaluation: frames before `first_evaluated`
/// only warm up the background model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalWindow {
    pub stream_id: StreamId,
    pub frame_count: u64,
    pub first_evaluated: u64,
}

impl EvalWindow {
    pub fn evaluates(&self, frame_index: u64) -> bool {
        frame_index >= self.first_evaluated && frame_index < self.frame_count
    }

    pub fn evaluated_range(&self) -> std::ops::Range<u64> {
        self.first_evaluated.min(self.frame_count)..self.frame_count
    }
}

pub fn select_sequences(sequences: &[SequenceInfo], min_frames: u64, warmup: u64) -> Vec<EvalWindow> {
    sequences
        .iter()
        .filter(|s| s.frame_count >= min_frames)
        .map(|s| EvalWindow {
            stream_id: s.stream_id.clone(),
            frame_count: s.frame_count,
            first_evaluated: warmup,
        })
        .collect()
}
