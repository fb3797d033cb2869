//! Newline-delimited JSON messages exchanged with a remote detector.
//!
//! ```text
//! -> {"id":7,"w":320,"h":320,"rgb_b64":"..."}
//! <- {"id":7,"detections":[{"x":1.5,"y":2,"w":30,"h":40,"class":"car","score":0.9}]}
//! ```
//!
//! A server may answer `{"id":7,"error":"..."}` instead of a detection list.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{Detection, DetectorError};
use crate::dataio::ClassLabel;
use crate::geometry::RectF;
use crate::raster::PixelBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub w: u32,
    pub h: u32,
    pub rgb_b64: String,
}

impl Request {
    pub fn new(id: u64, pixels: &PixelBuffer) -> Self {
        Self {
            id,
            w: pixels.width(),
            h: pixels.height(),
            rgb_b64: STANDARD.encode(pixels.data()),
        }
    }

    /// One line, newline included.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("request serializes");
        s.push('\n');
        s
    }

    pub fn decode_pixels(&self) -> Result<PixelBuffer, String> {
        let data = STANDARD
            .decode(&self.rgb_b64)
            .map_err(|e| format!("bad base64: {e}"))?;
        PixelBuffer::from_raw(self.w, self.h, data).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub class: String,
    pub score: f64,
}

impl From<&Detection> for WireDetection {
    fn from(d: &Detection) -> Self {
        Self {
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            class: d.class_label.as_str().to_string(),
            score: d.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<WireDetection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn ok(id: u64, detections: Vec<WireDetection>) -> Self {
        Self {
            id,
            detections: Some(detections),
            error: None,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("response serializes");
        s.push('\n');
        s
    }
}

fn convert(w: &WireDetection) -> Result<Detection, DetectorError> {
    if !(0.0..=1.0).contains(&w.score) {
        return Err(DetectorError::InvalidScore { score: w.score });
    }
    let finite = [w.x, w.y, w.w, w.h].iter().all(|v| v.is_finite());
    if !finite || w.w < 0.0 || w.h < 0.0 {
        return Err(DetectorError::Malformed(format!(
            "invalid box ({}, {}, {}, {})",
            w.x, w.y, w.w, w.h
        )));
    }
    let class_label: ClassLabel = w.class.parse().map_err(DetectorError::Malformed)?;
    Ok(Detection {
        bbox: RectF::new(w.x, w.y, w.w, w.h),
        class_label,
        score: w.score,
    })
}

/// Parse a response line (trailing newline optional) for request `expected_id`.
pub fn parse_response(line: &str, expected_id: u64) -> Result<Vec<Detection>, DetectorError> {
    let resp: Response = serde_json::from_str(line.trim_end_matches(['\n', '\r']))
        .map_err(|e| DetectorError::Malformed(e.to_string()))?;
    if resp.id != expected_id {
        return Err(DetectorError::IdMismatch {
            expected: expected_id,
            found: resp.id,
        });
    }
    if let Some(err) = resp.error {
        return Err(DetectorError::Remote(err));
    }
    let dets = resp
        .detections
        .ok_or_else(|| DetectorError::Malformed("missing `detections`".into()))?;
    dets.iter().map(convert).collect()
}
