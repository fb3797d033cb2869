use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::BgsError;
use crate::raster::{GrayBuffer, PixelBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PtpParams {
    /// Number of sampled frames averaged.
    pub window: usize,
    /// Minimum frame-index distance between two samples.
    pub sample_skip: u64,
}

impl Default for PtpParams {
    fn default() -> Self {
        Self {
            window: 20,
            sample_skip: 10,
        }
    }
}

impl PtpParams {
    pub(super) fn validate(&self) -> Result<(), BgsError> {
        if self.window == 0 || self.sample_skip == 0 {
            return Err(BgsError::InvalidConfig(
                "moving-average window and sample skip must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Exact sliding-window mean of the last `window` sampled frames, kept in
/// grayscale.
///
/// Samples are retained so the oldest one can be subtracted out of the
/// running per-pixel sums when it is evicted.
#[derive(Debug, Clone)]
pub struct MovingAverageModel {
    params: PtpParams,
    dims: Option<(u32, u32)>,
    samples: VecDeque<GrayBuffer>,
    sums: Vec<u32>,
    last_sample: Option<u64>,
    samples_seen: u64,
}

impl MovingAverageModel {
    pub fn new(params: PtpParams) -> Self {
        Self {
            params,
            dims: None,
            samples: VecDeque::with_capacity(params.window),
            sums: Vec::new(),
            last_sample: None,
            samples_seen: 0,
        }
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn window_len(&self) -> usize {
        self.samples.len()
    }

    /// Whether a frame at `frame_index` falls on the sampling cadence.
    pub fn sample_due(&self, frame_index: u64) -> bool {
        self.last_sample
            .is_none_or(|last| frame_index >= last + self.params.sample_skip)
    }

    /// Absorb `frame` if it is due for sampling. Returns whether it was.
    pub fn update(&mut self, frame_index: u64, frame: &PixelBuffer) -> Result<bool, BgsError> {
        self.check(frame.dims())?;
        if !self.sample_due(frame_index) {
            return Ok(false);
        }
        self.update_gray(frame_index, frame.to_gray())
    }

    /// [`Self::update`] with the frame already converted to grayscale.
    pub fn update_gray(&mut self, frame_index: u64, frame: GrayBuffer) -> Result<bool, BgsError> {
        self.check((frame.width(), frame.height()))?;
        if !self.sample_due(frame_index) {
            return Ok(false);
        }
        if self.dims.is_none() {
            self.dims = Some((frame.width(), frame.height()));
            self.sums = vec![0; frame.data().len()];
        }
        if self.samples.len() == self.params.window {
            let evicted = self.samples.pop_front().expect("window is non-empty");
            for (s, &v) in self.sums.iter_mut().zip(evicted.data()) {
                *s -= u32::from(v);
            }
        }
        for (s, &v) in self.sums.iter_mut().zip(frame.data()) {
            *s += u32::from(v);
        }
        self.samples.push_back(frame);
        self.last_sample = Some(frame_index);
        self.samples_seen += 1;
        Ok(true)
    }

    fn check(&self, found: (u32, u32)) -> Result<(), BgsError> {
        match self.dims {
            Some(expected) if expected != found => Err(BgsError::DimensionMismatch { expected, found }),
            _ => Ok(()),
        }
    }

    /// Exact per-pixel mean of the window, row-major.
    pub fn mean(&self) -> Option<Vec<f32>> {
        if self.samples.is_empty() {
            return None;
        }
        let n = self.samples.len() as f32;
        Some(self.sums.iter().map(|&s| s as f32 / n).collect())
    }

    /// Window mean rounded half up to 8 bits.
    pub fn mean_gray(&self) -> Option<GrayBuffer> {
        let (w, h) = self.dims?;
        let n = self.samples.len() as u32;
        if n == 0 {
            return None;
        }
        let data = self.sums.iter().map(|&s| ((s + n / 2) / n) as u8).collect();
        Some(GrayBuffer::from_raw(w, h, data).expect("model dimensions are valid"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(v: u8) -> PixelBuffer {
        PixelBuffer::filled(4, 3, [v, v, v])
    }

    fn params(window: usize, sample_skip: u64) -> PtpParams {
        PtpParams {
            window,
            sample_skip,
        }
    }

    #[test]
    fn constant_input_mean() {
        let mut m = MovingAverageModel::new(PtpParams::default());
        for i in 0..20 {
            m.update(i * 10, &frame(100)).unwrap();
        }
        assert!(m.mean().unwrap().iter().all(|&v| v == 100.0));
    }

    #[test]
    fn two_sample_average() {
        let mut m = MovingAverageModel::new(PtpParams::default());
        m.update(0, &frame(0)).unwrap();
        m.update(10, &frame(200)).unwrap();
        assert!(m.mean().unwrap().iter().all(|&v| v == 100.0));
    }

    #[test]
    fn oldest_sample_is_evicted() {
        let mut m = MovingAverageModel::new(params(3, 1));
        for (i, v) in [10, 20, 30, 40].into_iter().enumerate() {
            m.update(i as u64, &frame(v)).unwrap();
        }
        assert_eq!(m.window_len(), 3);
        assert!(m.mean().unwrap().iter().all(|&v| v == 30.0));
    }

    #[test]
    fn only_cadence_frames_are_sampled() {
        let mut m = MovingAverageModel::new(params(20, 10));
        let sampled: Vec<u64> = (0..35).filter(|&f| m.update(f, &frame(1)).unwrap()).collect();
        assert_eq!(sampled, [0, 10, 20, 30]);
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let mut m = MovingAverageModel::new(params(2, 1));
        m.update(0, &frame(1)).unwrap();
        let err = m.update(1, &PixelBuffer::new(5, 3)).unwrap_err();
        assert!(matches!(err, BgsError::DimensionMismatch { .. }));
    }
}
