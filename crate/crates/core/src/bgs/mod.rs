//! Background subtraction: per-stream background models producing binary
//! foreground masks.
//!
//! Three methods are available:
//!
//! * [`MovingAverageModel`]: sliding-window pixel mean, differenced against
//!   the frame after grayscale conversion and Gaussian blur.
//! * [`GaussianMixtureModel`]: adaptive per-pixel mixture of Gaussians.
//! * [`HybridModel`]: a mixture model refreshed at a fixed interval whose
//!   dominant background image is differenced like the moving average.

mod mog;
mod ptp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::raster::{abs_diff_threshold, gaussian_blur, BinaryMask, GrayBuffer, PixelBuffer};

pub use mog::{GaussianMixtureModel, MogParams, MAX_COMPONENTS};
pub use ptp::{MovingAverageModel, PtpParams};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BgsError {
    #[error("frame is {found:?} but the background model is {expected:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("background model has not seen any frame yet; warmup needed")]
    NotInitialized,
    #[error("invalid background subtraction config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BgsMethod {
    PtpMean,
    Mog2,
    Hybrid,
}

impl BgsMethod {
    pub const ALL: [BgsMethod; 3] = [BgsMethod::PtpMean, BgsMethod::Mog2, BgsMethod::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PtpMean => "ptp_mean",
            Self::Mog2 => "mog2",
            Self::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for BgsMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BgsMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ptp_mean" | "ptp" => Ok(Self::PtpMean),
            "mog2" | "mog" => Ok(Self::Mog2),
            "hybrid" => Ok(Self::Hybrid),
            _ => Err(format!("unknown background subtraction method `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgsConfig {
    pub method: BgsMethod,
    /// Odd Gaussian kernel size used by the difference pipeline.
    pub blur_kernel: u32,
    /// Foreground where the blurred absolute difference exceeds this.
    pub diff_threshold: u8,
    /// Frames between mixture-model refreshes in hybrid mode.
    pub hybrid_update_interval: u64,
    pub ptp: PtpParams,
    pub mog: MogParams,
}

impl Default for BgsConfig {
    fn default() -> Self {
        Self {
            method: BgsMethod::Mog2,
            blur_kernel: 5,
            diff_threshold: 30,
            hybrid_update_interval: 50,
            ptp: PtpParams::default(),
            mog: MogParams::default(),
        }
    }
}

impl BgsConfig {
    pub fn with_method(method: BgsMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BgsError> {
        let bad = |m: String| Err(BgsError::InvalidConfig(m));
        if self.blur_kernel.is_multiple_of(2) {
            return bad(format!("blur kernel must be odd and >= 1, got {}", self.blur_kernel));
        }
        if self.diff_threshold == 0 {
            return bad("diff threshold must lie in [1, 255]".into());
        }
        if self.hybrid_update_interval == 0 {
            return bad("hybrid update interval must be positive".into());
        }
        self.ptp.validate()?;
        self.mog.validate()
    }
}

/// Blur-difference-threshold pipeline between a background and a frame,
/// both already converted to grayscale.
pub fn diff_mask(background: &GrayBuffer, frame: &GrayBuffer, config: &BgsConfig) -> BinaryMask {
    let bg = gaussian_blur(background, config.blur_kernel);
    let fg = gaussian_blur(frame, config.blur_kernel);
    abs_diff_threshold(&bg, &fg, config.diff_threshold)
}

fn check_dims(expected: (u32, u32), frame: &PixelBuffer) -> Result<(), BgsError> {
    if expected != frame.dims() {
        return Err(BgsError::DimensionMismatch {
            expected,
            found: frame.dims(),
        });
    }
    Ok(())
}

/// Moving-average mask: grayscale background mean and frame, blur, difference.
pub fn ptp_mask(
    model: &MovingAverageModel,
    frame: &PixelBuffer,
    config: &BgsConfig,
) -> Result<BinaryMask, BgsError> {
    ptp_mask_gray(model, &frame.to_gray(), config)
}

fn ptp_mask_gray(
    model: &MovingAverageModel,
    frame: &GrayBuffer,
    config: &BgsConfig,
) -> Result<BinaryMask, BgsError> {
    let background = model.mean_gray().ok_or(BgsError::NotInitialized)?;
    let expected = (background.width(), background.height());
    let found = (frame.width(), frame.height());
    if expected != found {
        return Err(BgsError::DimensionMismatch { expected, found });
    }
    Ok(diff_mask(&background, frame, config))
}

/// Mixture model refreshed every `interval` frames; between refreshes the
/// blurred grayscale of its last background image is kept.
#[derive(Debug, Clone)]
pub struct HybridModel {
    mog: GaussianMixtureModel,
    interval: u64,
    last_refresh: Option<u64>,
    background: Option<GrayBuffer>,
}

impl HybridModel {
    pub fn new(params: MogParams, interval: u64) -> Self {
        Self {
            mog: GaussianMixtureModel::new(params),
            interval: interval.max(1),
            last_refresh: None,
            background: None,
        }
    }

    pub fn mixture(&self) -> &GaussianMixtureModel {
        &self.mog
    }

    pub fn last_refresh(&self) -> Option<u64> {
        self.last_refresh
    }

    pub fn refresh_due(&self, frame_index: u64) -> bool {
        self.last_refresh
            .is_none_or(|last| frame_index >= last + self.interval)
    }

    /// Update the mixture if a refresh is due at `frame_index`. Returns
    /// whether a refresh happened.
    pub fn maybe_refresh(
        &mut self,
        frame_index: u64,
        frame: &PixelBuffer,
        config: &BgsConfig,
    ) -> Result<bool, BgsError> {
        if !self.refresh_due(frame_index) {
            return Ok(false);
        }
        self.mog.update(frame)?;
        let bg = self.mog.background().ok_or(BgsError::NotInitialized)?;
        self.background = Some(gaussian_blur(&bg.to_gray(), config.blur_kernel));
        self.last_refresh = Some(frame_index);
        Ok(true)
    }

    /// Blurred grayscale background as of the latest refresh.
    pub fn cached_background(&self) -> Option<&GrayBuffer> {
        self.background.as_ref()
    }
}

/// Difference of `frame` against the hybrid model's cached background.
pub fn hybrid_mask(
    model: &HybridModel,
    frame: &PixelBuffer,
    config: &BgsConfig,
) -> Result<BinaryMask, BgsError> {
    let bg = model.cached_background().ok_or(BgsError::NotInitialized)?;
    check_dims((bg.width(), bg.height()), frame)?;
    let fg = gaussian_blur(&frame.to_gray(), config.blur_kernel);
    Ok(abs_diff_threshold(bg, &fg, config.diff_threshold))
}

/// One stream's background subtractor, whichever method is configured.
#[derive(Debug, Clone)]
pub enum Subtractor {
    PtpMean(MovingAverageModel),
    Mog2(GaussianMixtureModel),
    Hybrid(HybridModel),
}

impl Subtractor {
    pub fn new(config: &BgsConfig) -> Result<Self, BgsError> {
        config.validate()?;
        Ok(match config.method {
            BgsMethod::PtpMean => Self::PtpMean(MovingAverageModel::new(config.ptp)),
            BgsMethod::Mog2 => Self::Mog2(GaussianMixtureModel::new(config.mog)),
            BgsMethod::Hybrid => {
                Self::Hybrid(HybridModel::new(config.mog, config.hybrid_update_interval))
            }
        })
    }

    pub fn method(&self) -> BgsMethod {
        match self {
            Self::PtpMean(_) => BgsMethod::PtpMean,
            Self::Mog2(_) => BgsMethod::Mog2,
            Self::Hybrid(_) => BgsMethod::Hybrid,
        }
    }

    /// Feed the next processed frame. Returns `None` while the model has no
    /// background to compare against yet; otherwise the foreground mask.
    ///
    /// The moving average and the mixture are differenced against the model
    /// state before this frame is absorbed; the hybrid model refreshes first
    /// when due and then differences against the cached background.
    pub fn process(
        &mut self,
        frame_index: u64,
        frame: &PixelBuffer,
        config: &BgsConfig,
    ) -> Result<Option<BinaryMask>, BgsError> {
        match self {
            Self::PtpMean(model) => {
                let gray = frame.to_gray();
                let mask = if model.samples_seen() > 0 {
                    Some(ptp_mask_gray(model, &gray, config)?)
                } else {
                    None
                };
                model.update_gray(frame_index, gray)?;
                Ok(mask)
            }
            Self::Mog2(model) => {
                if !model.is_initialized() {
                    model.update(frame)?;
                    return Ok(None);
                }
                model.apply(frame).map(Some)
            }
            Self::Hybrid(model) => {
                model.maybe_refresh(frame_index, frame, config)?;
                hybrid_mask(model, frame, config).map(Some)
            }
        }
    }
}
