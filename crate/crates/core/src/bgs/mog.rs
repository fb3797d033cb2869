use serde::{Deserialize, Serialize};

use super::BgsError;
use crate::raster::{BinaryMask, PixelBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MogParams {
    /// Maximum number of Gaussians per pixel.
    pub components: usize,
    /// Steady-state learning rate.
    pub learning_rate: f32,
    /// Cumulative weight that defines the background components.
    pub background_ratio: f32,
    /// Match distance in standard deviations.
    pub match_threshold: f32,
    pub initial_variance: f32,
    pub variance_floor: f32,
    /// Use `max(learning_rate, 1 / 2n)` on the n-th update so the first
    /// frames are learned quickly.
    pub bootstrap: bool,
}

impl Default for MogParams {
    fn default() -> Self {
        Self {
            components: 5,
            learning_rate: 0.005,
            background_ratio: 0.9,
            match_threshold: 2.5,
            initial_variance: 225.0,
            variance_floor: 4.0,
            bootstrap: true,
        }
    }
}

impl MogParams {
    pub(super) fn validate(&self) -> Result<(), BgsError> {
        let bad = |m: &str| Err(BgsError::InvalidConfig(m.to_string()));
        if self.components == 0 || self.components > MAX_COMPONENTS {
            return bad("mixture component count must lie in [1, 8]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("mixture learning rate must lie in (0, 1]");
        }
        if !(self.background_ratio > 0.0 && self.background_ratio <= 1.0) {
            return bad("background ratio must lie in (0, 1]");
        }
        if self.match_threshold.is_nan() || self.match_threshold <= 0.0 || self.variance_floor.is_nan() || self.variance_floor <= 0.0 {
            return bad("match threshold and variance floor must be positive");
        }
        if self.initial_variance < self.variance_floor {
            return bad("initial variance must not be below the variance floor");
        }
        Ok(())
    }
}

/// Upper bound on [`MogParams::components`].
pub const MAX_COMPONENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Mode {
    weight: f32,
    var: f32,
    mean: [f32; 3],
}

const EMPTY: Mode = Mode {
    weight: 0.0,
    var: 0.0,
    mean: [0.0; 3],
};

/// Per-pixel adaptive mixture of isotropic RGB Gaussians.
///
/// Components of each pixel are kept sorted by `weight / sigma`, so the
/// background is always a prefix of the active components.
///
/// Storage is slot-major: plane `s` holds the `s`-th ranked component of
/// every pixel, so pixels with few active components touch few planes.
#[derive(Debug, Clone)]
pub struct GaussianMixtureModel {
    params: MogParams,
    dims: Option<(u32, u32)>,
    /// `components` planes of `pixel_count` entries each.
    modes: Vec<Mode>,
    used: Vec<u8>,
    updates: u64,
}

#[derive(Clone, Copy)]
struct Consts {
    thr2: f32,
    bg_ratio: f32,
    floor: f32,
    init_var: f32,
    prune: f32,
}

#[inline]
fn dist2(mean: &[f32; 3], x: &[f32; 3]) -> f32 {
    let d0 = x[0] - mean[0];
    let d1 = x[1] - mean[1];
    let d2 = x[2] - mean[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Whether `x` is foreground: it matches no component of the background
/// prefix.
#[inline]
fn classify(modes: &[Mode], x: &[f32; 3], c: &Consts) -> bool {
    let mut cum = 0.0;
    for m in modes {
        if dist2(&m.mean, x) < c.thr2 * m.var {
            return cum >= c.bg_ratio;
        }
        cum += m.weight;
    }
    true
}

#[inline]
fn ranks_before(a: &Mode, b: &Mode) -> bool {
    // a.w / sqrt(a.var) > b.w / sqrt(b.var)
    a.weight * a.weight * b.var > b.weight * b.weight * a.var
}

/// Classify `x` against the active components of one pixel and update them
/// in a single pass. Returns whether `x` is foreground under the model as it
/// was before the update.
#[inline]
fn step(slots: &mut [Mode], used: &mut u8, x: &[f32; 3], alpha: f32, c: &Consts) -> bool {
    let mut n = *used as usize;
    let decay = 1.0 - alpha;
    let mut matched = None;
    let mut fg = true;
    let mut cum = 0.0;
    let mut total = 0.0;
    for (k, m) in slots[..n].iter_mut().enumerate() {
        let w = m.weight;
        m.weight = w * decay;
        if matched.is_none() {
            let d2 = dist2(&m.mean, x);
            if d2 < c.thr2 * m.var {
                matched = Some(k);
                fg = cum >= c.bg_ratio;
                m.weight += alpha;
                let rho = (alpha / m.weight).min(1.0);
                for (mu, &v) in m.mean.iter_mut().zip(x.iter()) {
                    *mu += rho * (v - *mu);
                }
                m.var = (m.var + rho * (d2 / 3.0 - m.var)).max(c.floor);
            }
            cum += w;
        }
        total += m.weight;
    }
    let touched = match matched {
        Some(k) => k,
        None => {
            let slot = if n < slots.len() {
                n += 1;
                n - 1
            } else {
                let mut lowest = 0;
                for i in 1..n {
                    if slots[i].weight < slots[lowest].weight {
                        lowest = i;
                    }
                }
                total -= slots[lowest].weight;
                lowest
            };
            slots[slot] = Mode {
                weight: alpha,
                var: c.init_var,
                mean: *x,
            };
            total += alpha;
            slot
        }
    };

    // Only the touched component changed its rank; move it into place.
    let mut k = touched;
    while k > 0 && ranks_before(&slots[k], &slots[k - 1]) {
        slots.swap(k, k - 1);
        k -= 1;
    }
    while k + 1 < n && ranks_before(&slots[k + 1], &slots[k]) {
        slots.swap(k, k + 1);
        k += 1;
    }

    let inv = 1.0 / total;
    let mut prune = false;
    for m in &mut slots[..n] {
        m.weight *= inv;
        prune |= m.weight < c.prune;
    }
    if prune && n > 1 {
        let mut kept = 0;
        total = 0.0;
        for i in 0..n {
            if slots[i].weight >= c.prune || (kept == 0 && i == n - 1) {
                slots[kept] = slots[i];
                total += slots[kept].weight;
                kept += 1;
            }
        }
        n = kept;
        let inv = 1.0 / total;
        for m in &mut slots[..n] {
            m.weight *= inv;
        }
    }
    *used = n as u8;
    fg
}

impl GaussianMixtureModel {
    pub fn new(params: MogParams) -> Self {
        Self {
            params,
            dims: None,
            modes: Vec::new(),
            used: Vec::new(),
            updates: 0,
        }
    }

    pub fn params(&self) -> &MogParams {
        &self.params
    }

    pub fn is_initialized(&self) -> bool {
        self.dims.is_some()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn consts(&self) -> Consts {
        let p = &self.params;
        Consts {
            thr2: p.match_threshold * p.match_threshold,
            bg_ratio: p.background_ratio,
            floor: p.variance_floor,
            init_var: p.initial_variance,
            prune: 0.05 * p.learning_rate,
        }
    }

    /// Learning rate applied by the next update.
    pub fn next_learning_rate(&self) -> f32 {
        let n = (self.updates + 1) as f32;
        if self.params.bootstrap {
            self.params.learning_rate.max(1.0 / (2.0 * n))
        } else {
            self.params.learning_rate
        }
    }

    fn check(&self, frame: &PixelBuffer) -> Result<(), BgsError> {
        match self.dims {
            Some(expected) if expected != frame.dims() => Err(BgsError::DimensionMismatch {
                expected,
                found: frame.dims(),
            }),
            _ => Ok(()),
        }
    }

    fn initialize(&mut self, frame: &PixelBuffer) {
        let k = self.params.components;
        self.dims = Some(frame.dims());
        self.modes = vec![EMPTY; frame.pixel_count() * k];
        self.used = vec![1; frame.pixel_count()];
        for (slot, p) in self.modes.iter_mut().zip(frame.data().chunks_exact(3)) {
            *slot = Mode {
                weight: 1.0,
                var: self.params.initial_variance,
                mean: [f32::from(p[0]), f32::from(p[1]), f32::from(p[2])],
            };
        }
        self.updates = 1;
    }

    /// Absorb one frame. The first frame initializes one component per pixel.
    pub fn update(&mut self, frame: &PixelBuffer) -> Result<(), BgsError> {
        self.apply_inner(frame, None)
    }

    /// Foreground mask against the current model and then update it, in one
    /// pass. Equivalent to [`Self::mask`] followed by [`Self::update`].
    pub fn apply(&mut self, frame: &PixelBuffer) -> Result<BinaryMask, BgsError> {
        if !self.is_initialized() {
            return Err(BgsError::NotInitialized);
        }
        let mut out = vec![false; frame.pixel_count()];
        self.apply_inner(frame, Some(&mut out))?;
        Ok(BinaryMask::from_raw(frame.width(), frame.height(), out).expect("frame dims"))
    }

    fn apply_inner(&mut self, frame: &PixelBuffer, mut out: Option<&mut [bool]>) -> Result<(), BgsError> {
        self.check(frame)?;
        if !self.is_initialized() {
            self.initialize(frame);
            return Ok(());
        }
        let alpha = self.next_learning_rate();
        let c = self.consts();
        let k = self.params.components;
        let n = self.used.len();
        let mut local = [EMPTY; MAX_COMPONENTS];
        for (i, (used, p)) in self.used.iter_mut().zip(frame.data().chunks_exact(3)).enumerate() {
            let x = [f32::from(p[0]), f32::from(p[1]), f32::from(p[2])];
            let u = *used as usize;
            for (s, m) in local[..u].iter_mut().enumerate() {
                *m = self.modes[s * n + i];
            }
            let fg = step(&mut local[..k], used, &x, alpha, &c);
            if let Some(out) = out.as_deref_mut() {
                out[i] = fg;
            }
            for (s, m) in local[..*used as usize].iter().enumerate() {
                self.modes[s * n + i] = *m;
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Foreground where the pixel matches none of the background components.
    pub fn mask(&self, frame: &PixelBuffer) -> Result<BinaryMask, BgsError> {
        if !self.is_initialized() {
            return Err(BgsError::NotInitialized);
        }
        self.check(frame)?;
        let c = self.consts();
        let mut local = [EMPTY; MAX_COMPONENTS];
        let data = frame
            .data()
            .chunks_exact(3)
            .enumerate()
            .map(|(i, p)| {
                let x = [f32::from(p[0]), f32::from(p[1]), f32::from(p[2])];
                let u = self.gather(i, &mut local);
                classify(&local[..u], &x, &c)
            })
            .collect();
        Ok(BinaryMask::from_raw(frame.width(), frame.height(), data).expect("frame dims"))
    }

    /// Mean of the heaviest background component of every pixel.
    pub fn background(&self) -> Option<PixelBuffer> {
        let (w, h) = self.dims?;
        let ratio = self.params.background_ratio;
        let n = self.used.len();
        let mut data = Vec::with_capacity(n * 3);
        for (i, &used) in self.used.iter().enumerate() {
            let mut cum = 0.0;
            let mut best = &self.modes[i];
            for s in 0..used as usize {
                if cum >= ratio {
                    break;
                }
                let m = &self.modes[s * n + i];
                if m.weight > best.weight {
                    best = m;
                }
                cum += m.weight;
            }
            // Means are convex combinations of 8-bit samples, so never negative.
            data.extend(best.mean.iter().map(|&v| (v + 0.5) as u8));
        }
        Some(PixelBuffer::from_raw(w, h, data).expect("model dimensions are valid"))
    }

    /// Copy the active components of pixel `i` into `local`, returning how
    /// many there are.
    fn gather(&self, i: usize, local: &mut [Mode; MAX_COMPONENTS]) -> usize {
        let n = self.used.len();
        let u = self.used[i] as usize;
        for (s, m) in local[..u].iter_mut().enumerate() {
            *m = self.modes[s * n + i];
        }
        u
    }

    fn pixel_components(&self, x: u32, y: u32) -> Option<Vec<Mode>> {
        let (w, _) = self.dims?;
        let mut local = [EMPTY; MAX_COMPONENTS];
        let u = self.gather((y * w + x) as usize, &mut local);
        Some(local[..u].to_vec())
    }

    /// Sum of component weights at pixel `(x, y)`.
    pub fn weight_sum(&self, x: u32, y: u32) -> Option<f32> {
        Some(self.pixel_components(x, y)?.iter().map(|m| m.weight).sum())
    }

    /// Active component count at pixel `(x, y)`.
    pub fn active_components(&self, x: u32, y: u32) -> Option<usize> {
        let (w, _) = self.dims?;
        Some(self.used[(y * w + x) as usize] as usize)
    }

    /// `(weight, variance, mean)` of every active component at `(x, y)`,
    /// in rank order.
    pub fn components_at(&self, x: u32, y: u32) -> Option<Vec<(f32, f32, [f32; 3])>> {
        Some(
            self.pixel_components(x, y)?
                .iter()
                .map(|m| (m.weight, m.var, m.mean))
                .collect(),
        )
    }
}
