//! The object-detection stage behind a small contract, with a ground-truth
//! oracle and a TCP client for externally hosted models.

mod oracle;
pub mod protocol;
mod remote;
pub mod test_server;

use std::io;

use serde::{Deserialize, Serialize};

use crate::composer::CompositeFrame;
use crate::dataio::ClassLabel;
use crate::geometry::RectF;
use crate::raster::PixelBuffer;

pub use oracle::{OracleConfig, OracleDetector};
pub use remote::{RemoteDetector, DEFAULT_TIMEOUT};

/// A detection in model-input pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: RectF,
    pub class_label: ClassLabel,
    pub score: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum DetectorError {
    #[error("cannot connect to detector at {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("detector i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("detector did not answer request {id} in time")]
    Timeout { id: u64 },
    #[error("response truncated after {received} bytes")]
    Truncated { received: usize },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("score {score} outside [0, 1]")]
    InvalidScore { score: f64 },
    #[error("response id {found} does not match request id {expected}")]
    IdMismatch { expected: u64, found: u64 },
    #[error("detector reported an error: {0}")]
    Remote(String),
    #[error("oracle detector needs composite placement metadata")]
    MissingMetadata,
    #[error("input is {found:?}, detector expects {expected}x{expected}")]
    InputSize { expected: u32, found: (u32, u32) },
}

impl DetectorError {
    /// Short stable name used in run counters.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Connect { .. } => "connect",
            Self::Io(_) => "io",
            Self::Timeout { .. } => "timeout",
            Self::Truncated { .. } => "truncated",
            Self::Malformed(_) => "malformed",
            Self::InvalidScore { .. } => "invalid_score",
            Self::IdMismatch { .. } => "id_mismatch",
            Self::Remote(_) => "remote",
            Self::MissingMetadata => "missing_metadata",
            Self::InputSize { .. } => "input_size",
        }
    }
}

/// Detector contract: square inputs of `input_side` pixels in, detections
/// in input coordinates out. `composite` carries the placement map of the
/// input when it was built by the composer.
pub trait Detector: Send {
    fn input_side(&self) -> u32;

    fn detect(
        &mut self,
        input: &PixelBuffer,
        composite: Option<&CompositeFrame>,
    ) -> Result<Vec<Detection>, DetectorError>;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn input_side(&self) -> u32 {
        (**self).input_side()
    }

    fn detect(
        &mut self,
        input: &PixelBuffer,
        composite: Option<&CompositeFrame>,
    ) -> Result<Vec<Detection>, DetectorError> {
        (**self).detect(input, composite)
    }
}

fn check_input(input: &PixelBuffer, side: u32) -> Result<(), DetectorError> {
    if input.dims() != (side, side) {
        return Err(DetectorError::InputSize {
            expected: side,
            found: input.dims(),
        });
    }
    Ok(())
}
