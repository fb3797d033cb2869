//! Pixel containers and the low-level image operations shared by the
//! background-subtraction and composition stages.

use crate::geometry::BoundingBox;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("raster dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("buffer of {found} bytes does not match {width}x{height}x{channels}")]
    LengthMismatch {
        width: u32,
        height: u32,
        channels: u32,
        found: usize,
    },
}

fn check_dims(width: u32, height: u32) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyDimensions { width, height });
    }
    Ok(())
}

/// 8-bit RGB raster, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl PixelBuffer {
    /// Black raster. Panics on zero dimensions.
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if data.len() != width as usize * height as usize * 3 {
            return Err(RasterError::LengthMismatch {
                width,
                height,
                channels: 3,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    /// Paint a solid rectangle, clipped to the raster.
    pub fn fill_rect(&mut self, rect: &BoundingBox, rgb: [u8; 3]) {
        let Some(r) = rect.clamp_to(self.width, self.height) else {
            return;
        };
        for y in r.y..r.bottom() {
            let start = self.offset(r.x, y);
            for chunk in self.data[start..start + r.w as usize * 3].chunks_exact_mut(3) {
                chunk.copy_from_slice(&rgb);
            }
        }
    }

    /// Copy of the region `rect`, which must lie inside the raster.
    pub fn crop(&self, rect: &BoundingBox) -> PixelBuffer {
        assert!(
            rect.right() <= self.width && rect.bottom() <= self.height && rect.w > 0 && rect.h > 0,
            "crop {rect:?} outside {}x{}",
            self.width,
            self.height
        );
        let row_len = rect.w as usize * 3;
        let mut data = Vec::with_capacity(row_len * rect.h as usize);
        for y in rect.y..rect.bottom() {
            let start = self.offset(rect.x, y);
            data.extend_from_slice(&self.data[start..start + row_len]);
        }
        PixelBuffer {
            width: rect.w,
            height: rect.h,
            data,
        }
    }

    /// Paste `src` with its top-left corner at `(x, y)`; must fit entirely.
    pub fn blit(&mut self, src: &PixelBuffer, x: u32, y: u32) {
        assert!(
            x + src.width <= self.width && y + src.height <= self.height,
            "blit of {}x{} at ({x},{y}) outside {}x{}",
            src.width,
            src.height,
            self.width,
            self.height
        );
        let row_len = src.width as usize * 3;
        for row in 0..src.height {
            let dst = self.offset(x, y + row);
            let s = row as usize * row_len;
            self.data[dst..dst + row_len].copy_from_slice(&src.data[s..s + row_len]);
        }
    }

    /// Rec.601 luma conversion.
    pub fn to_gray(&self) -> GrayBuffer {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect();
        GrayBuffer {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// `round(0.299 R + 0.587 G + 0.114 B)` in 16-bit fixed point.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((19595 * u32::from(r) + 38470 * u32::from(g) + 7471 * u32::from(b) + 32768) >> 16) as u8
}

/// Single-channel 8-bit raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayBuffer {
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if data.len() != width as usize * height as usize {
            return Err(RasterError::LengthMismatch {
                width,
                height,
                channels: 1,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

/// Foreground mask; `true` marks a changed pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<bool>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if data.len() != width as usize * height as usize {
            return Err(RasterError::LengthMismatch {
                width,
                height,
                channels: 1,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = value;
    }

    pub fn fill_rect(&mut self, rect: &BoundingBox) {
        let Some(r) = rect.clamp_to(self.width, self.height) else {
            return;
        };
        for y in r.y..r.bottom() {
            let start = y as usize * self.width as usize + r.x as usize;
            self.data[start..start + r.w as usize].fill(true);
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }
}

/// Sigma implied by a kernel size when none is given explicitly.
pub fn default_sigma(ksize: u32) -> f64 {
    0.3 * ((f64::from(ksize) - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian weights of odd length `ksize`.
pub fn gaussian_kernel(ksize: u32) -> Vec<f32> {
    assert!(ksize % 2 == 1, "kernel size must be odd");
    let sigma = default_sigma(ksize);
    let r = (ksize / 2) as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / sum) as f32).collect()
}

/// Mirror an out-of-range index without repeating the edge sample
/// (`gfedcb|abcdefgh|gfedcba`).
#[inline]
pub fn reflect_101(mut i: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(src: &GrayBuffer, ksize: u32) -> GrayBuffer {
    if ksize <= 1 {
        return src.clone();
    }
    let kernel = gaussian_kernel(ksize);
    let r = kernel.len() / 2;
    let w = src.width as usize;
    let h = src.height as usize;

    // Horizontal pass into f32 rows.
    let mut tmp = vec![0f32; w * h];
    let mut padded = vec![0f32; w + 2 * r];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for (i, slot) in padded.iter_mut().enumerate() {
            *slot = f32::from(row[reflect_101(i as i64 - r as i64, w as i64)]);
        }
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let window = &padded[x..x + kernel.len()];
            *o = window.iter().zip(&kernel).map(|(a, k)| a * k).sum();
        }
    }

    // Vertical pass, one output row at a time.
    let mut data = vec![0u8; w * h];
    let mut acc = vec![0f32; w];
    for y in 0..h {
        acc.fill(0.0);
        for (k, weight) in kernel.iter().enumerate() {
            let sy = reflect_101(y as i64 + k as i64 - r as i64, h as i64);
            let row = &tmp[sy * w..(sy + 1) * w];
            for (a, v) in acc.iter_mut().zip(row) {
                *a += weight * v;
            }
        }
        for (d, a) in data[y * w..(y + 1) * w].iter_mut().zip(&acc) {
            *d = (a + 0.5).clamp(0.0, 255.0) as u8;
        }
    }
    GrayBuffer {
        width: src.width,
        height: src.height,
        data,
    }
}

/// Foreground where `|a - b| > threshold`.
pub fn abs_diff_threshold(a: &GrayBuffer, b: &GrayBuffer, threshold: u8) -> BinaryMask {
    assert_eq!((a.width, a.height), (b.width, b.height), "raster size mismatch");
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&p, &q)| p.abs_diff(q) > threshold)
        .collect();
    BinaryMask {
        width: a.width,
        height: a.height,
        data,
    }
}

/// Bilinear resampling with pixel-center alignment. Same-size input is
/// returned unchanged.
pub fn resize_bilinear(src: &PixelBuffer, out_w: u32, out_h: u32) -> PixelBuffer {
    assert!(out_w > 0 && out_h > 0, "output dimensions must be positive");
    if src.dims() == (out_w, out_h) {
        return src.clone();
    }
    let taps = |src_len: u32, dst_len: u32| -> Vec<(usize, usize, f32)> {
        let scale = f64::from(src_len) / f64::from(dst_len);
        (0..dst_len)
            .map(|d| {
                let s = ((f64::from(d) + 0.5) * scale - 0.5).max(0.0);
                let i0 = (s.floor() as usize).min(src_len as usize - 1);
                let i1 = (i0 + 1).min(src_len as usize - 1);
                (i0, i1, (s - i0 as f64).clamp(0.0, 1.0) as f32)
            })
            .collect()
    };
    let xs = taps(src.width, out_w);
    let ys = taps(src.height, out_h);
    let sw = src.width as usize;
    let mut out = vec![0u8; out_w as usize * out_h as usize * 3];
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        let row0 = &src.data[y0 * sw * 3..(y0 + 1) * sw * 3];
        let row1 = &src.data[y1 * sw * 3..(y1 + 1) * sw * 3];
        let dst = &mut out[oy * out_w as usize * 3..(oy + 1) * out_w as usize * 3];
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..3 {
                let p00 = f32::from(row0[x0 * 3 + c]);
                let p01 = f32::from(row0[x1 * 3 + c]);
                let p10 = f32::from(row1[x0 * 3 + c]);
                let p11 = f32::from(row1[x1 * 3 + c]);
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                dst[ox * 3 + c] = (top + (bottom - top) * fy + 0.5).clamp(0.0, 255.0) as u8;
            }
        }
    }
    PixelBuffer {
        width: out_w,
        height: out_h,
        data: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_of_gray_is_identity() {
        for v in [0u8, 1, 77, 128, 254, 255] {
            assert_eq!(luma(v, v, v), v);
        }
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(5);
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert_eq!(k[0], k[4]);
        assert_eq!(k[1], k[3]);
        assert!((default_sigma(5) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn reflect_mirrors_without_edge_repeat() {
        assert_eq!(reflect_101(-1, 5), 1);
        assert_eq!(reflect_101(-2, 5), 2);
        assert_eq!(reflect_101(5, 5), 3);
        assert_eq!(reflect_101(6, 5), 2);
        assert_eq!(reflect_101(-3, 2), 1);
        assert_eq!(reflect_101(7, 1), 0);
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let g = GrayBuffer::filled(7, 3, 93);
        assert_eq!(gaussian_blur(&g, 5), g);
    }

    #[test]
    fn crop_and_blit_round_trip() {
        let mut src = PixelBuffer::new(8, 6);
        for y in 0..6 {
            for x in 0..8 {
                src.put(x, y, [x as u8, y as u8, (x * y) as u8]);
            }
        }
        let region = BoundingBox::new(2, 1, 4, 3);
        let c = src.crop(&region);
        assert_eq!(c.get(0, 0), src.get(2, 1));
        let mut canvas = PixelBuffer::new(8, 6);
        canvas.blit(&c, 2, 1);
        assert_eq!(canvas.crop(&region), c);
    }

    #[test]
    fn resize_identity_and_constant() {
        let p = PixelBuffer::filled(10, 10, [3, 100, 250]);
        assert_eq!(resize_bilinear(&p, 10, 10), p);
        assert_eq!(resize_bilinear(&p, 23, 7), PixelBuffer::filled(23, 7, [3, 100, 250]));
    }

    #[test]
    fn from_raw_validates_length() {
        assert!(PixelBuffer::from_raw(2, 2, vec![0; 11]).is_err());
        assert!(PixelBuffer::from_raw(0, 2, vec![]).is_err());
        assert!(PixelBuffer::from_raw(2, 2, vec![0; 12]).is_ok());
    }
}
