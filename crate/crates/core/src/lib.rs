//! Moving-object extraction and multi-camera composition for consolidated
//! object detection on static-camera video.
//!
//! Frames flow through [`bgs`] (foreground masks), [`extract`] (object
//! boxes and crops), [`composer`] (square composites of crops from many
//! streams), a [`detector`], and [`backmap`] (detections back in scene
//! coordinates). [`eval`] scores the result and [`pipeline`] wires the
//! stages together.

pub mod backmap;
pub mod bgs;
pub mod composer;
pub mod dataio;
pub mod detector;
pub mod eval;
pub mod extract;
pub mod geometry;
pub mod pipeline;
pub mod raster;

pub use geometry::{BoundingBox, RectF};
pub use raster::PixelBuffer;
