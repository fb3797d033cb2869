//! Integer and fractional axis-aligned rectangles.

use serde::{Deserialize, Serialize};

/// Axis-aligned integer rectangle; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Box covering `[x0, x1) × [y0, y1)`. Returns `None` when empty.
    pub fn from_corners(x0: u32, y0: u32, x1: u32, y1: u32) -> Option<Self> {
        (x1 > x0 && y1 > y0).then(|| Self::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Exclusive right edge.
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn intersection(&self, other: &Self) -> Option<Self> {
        Self::from_corners(
            self.x.max(other.x),
            self.y.max(other.y),
            self.right().min(other.right()),
            self.bottom().min(other.bottom()),
        )
    }

    pub fn intersection_area(&self, other: &Self) -> u64 {
        self.intersection(other).map_or(0, |b| b.area())
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &Self) -> Self {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        Self::new(
            x0,
            y0,
            self.right().max(other.right()) - x0,
            self.bottom().max(other.bottom()) - y0,
        )
    }

    pub fn contains(&self, other: &Self) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Clip to a `width × height` frame. `None` if nothing remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<Self> {
        let x1 = (u64::from(self.x) + u64::from(self.w)).min(u64::from(width)) as u32;
        let y1 = (u64::from(self.y) + u64::from(self.h)).min(u64::from(height)) as u32;
        Self::from_corners(self.x.min(width), self.y.min(height), x1, y1)
    }

    /// Grow by `margin` on every side (towards the origin saturating at 0).
    pub fn inflate(&self, margin: u32) -> Self {
        let x = self.x.saturating_sub(margin);
        let y = self.y.saturating_sub(margin);
        Self::new(
            x,
            y,
            self.right() + margin - x,
            self.bottom() + margin - y,
        )
    }

    /// Row-major ordering key: top edge first, then left edge.
    pub fn raster_key(&self) -> (u32, u32, u32, u32) {
        (self.y, self.x, self.h, self.w)
    }
}

/// Fractional rectangle used for detector output and coordinate mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectF {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl RectF {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| Self::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::new(self.x * factor, self.y * factor, self.w * factor, self.h * factor)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Clip to `[0, width] × [0, height]`; may produce an empty rectangle.
    pub fn clamp_to(&self, width: f64, height: f64) -> Self {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = self.right().clamp(0.0, width);
        let y1 = self.bottom().clamp(0.0, height);
        Self::new(x0, y0, (x1 - x0).max(0.0), (y1 - y0).max(0.0))
    }

    /// Round both corners half-up onto the integer grid. Degenerate results
    /// are widened to one pixel so the output is a valid `BoundingBox`.
    pub fn round_half_up(&self) -> BoundingBox {
        let round = |v: f64| (v + 0.5).floor().max(0.0) as u32;
        let x0 = round(self.x);
        let y0 = round(self.y);
        let x1 = round(self.right()).max(x0 + 1);
        let y1 = round(self.bottom()).max(y0 + 1);
        BoundingBox::new(x0, y0, x1 - x0, y1 - y0)
    }
}

impl From<BoundingBox> for RectF {
    fn from(b: BoundingBox) -> Self {
        Self::new(f64::from(b.x), f64::from(b.y), f64::from(b.w), f64::from(b.h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersection_and_hull() {
        let a = BoundingBox::new(0, 0, 10, 10);
        let b = BoundingBox::new(5, 5, 10, 10);
        assert_eq!(a.intersection(&b), Some(BoundingBox::new(5, 5, 5, 5)));
        assert_eq!(a.hull(&b), BoundingBox::new(0, 0, 15, 15));
        let c = BoundingBox::new(10, 0, 5, 5);
        assert_eq!(a.intersection(&c), None);
    }

    #[test]
    fn clamp_reduces_width() {
        let b = BoundingBox::new(90, 10, 15, 5);
        assert_eq!(b.clamp_to(100, 100), Some(BoundingBox::new(90, 10, 10, 5)));
        assert_eq!(BoundingBox::new(100, 0, 5, 5).clamp_to(100, 100), None);
    }

    #[test]
    fn round_half_up_rounds_corners() {
        let r = RectF::new(1.5, 2.49, 3.0, 3.0);
        assert_eq!(r.round_half_up(), BoundingBox::new(2, 2, 3, 3));
        let thin = RectF::new(4.2, 4.2, 0.1, 0.1);
        assert_eq!(thin.round_half_up(), BoundingBox::new(4, 4, 1, 1));
    }
}
