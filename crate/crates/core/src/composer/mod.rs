//! Consolidation of object crops from many streams into square composite
//! frames.
//!
//! Crops wait in a FCFS [`Pool`]. Each composition selects a candidate set
//! according to the [`CompositionPolicy`], packs it with [`pack`], paints the
//! crops onto a black canvas and keeps a placement map so detections can be
//! translated back to scene coordinates.

mod pack;

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::StreamId;
use crate::extract::{CropOrigin, ObjectCrop};
use crate::geometry::BoundingBox;
use crate::raster::{resize_bilinear, PixelBuffer};

pub use pack::{pack, pack_with_step, side_lower_bound, PackItem, PackResult, SIDE_STEP};

pub const DEFAULT_POOL_CAPACITY: usize = 1024;
pub const DEFAULT_BORDER: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompositionPolicy {
    /// Cap the canvas side at `max_downscale × model_input` pixels.
    DownscaleLimit { max_downscale: f64, model_input: u32 },
    /// Take every crop of the first `max_frames` camera frames in the pool;
    /// the canvas grows as needed.
    Elastic { max_frames: usize },
}

impl CompositionPolicy {
    pub fn side_limit(&self) -> Option<u32> {
        match *self {
            Self::DownscaleLimit {
                max_downscale,
                model_input,
            } => Some(((max_downscale * f64::from(model_input)).floor() as u32).max(1)),
            Self::Elastic { .. } => None,
        }
    }
}

/// Textual policy as given on the command line, before the model input size
/// is known: `downscale:<factor>` or `elastic:<frames>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    Downscale(f64),
    Elastic(usize),
}

impl PolicySpec {
    pub fn resolve(self, model_input: u32) -> CompositionPolicy {
        match self {
            Self::Downscale(max_downscale) => CompositionPolicy::DownscaleLimit {
                max_downscale,
                model_input,
            },
            Self::Elastic(max_frames) => CompositionPolicy::Elastic { max_frames },
        }
    }
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("policy `{s}` must look like downscale:<factor> or elastic:<n>"))?;
        match kind.trim() {
            "downscale" => {
                let f: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad downscale factor `{value}`"))?;
                if !f.is_finite() || f < 1.0 {
                    return Err(format!("downscale factor must be >= 1, got {f}"));
                }
                Ok(Self::Downscale(f))
            }
            "elastic" => {
                let n: usize = value
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad elastic frame count `{value}`"))?;
                if n == 0 {
                    return Err("elastic frame count must be positive".into());
                }
                Ok(Self::Elastic(n))
            }
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Downscale(v) => write!(f, "downscale:{v}"),
            Self::Elastic(n) => write!(f, "elastic:{n}"),
        }
    }
}

/// FCFS queue of crops waiting for composition.
#[derive(Debug, Clone)]
pub struct Pool {
    crops: VecDeque<ObjectCrop>,
    capacity: usize,
    dropped: u64,
}

impl Default for Pool {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_POOL_CAPACITY)
    }
}

impl Pool {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            crops: VecDeque::new(),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    /// Insert keeping arrival order; beyond capacity the oldest crops are
    /// dropped. Returns how many were dropped by this call.
    pub fn enqueue(&mut self, crop: ObjectCrop) -> usize {
        let seq = crop.arrival_seq();
        let pos = self
            .crops
            .iter()
            .rposition(|c| c.arrival_seq() <= seq)
            .map_or(0, |p| p + 1);
        self.crops.insert(pos, crop);
        let mut dropped = 0;
        while self.crops.len() > self.capacity {
            self.crops.pop_front();
            dropped += 1;
        }
        self.dropped += dropped as u64;
        dropped
    }

    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObjectCrop> {
        self.crops.iter()
    }

    /// Distinct camera frames currently waiting.
    pub fn pending_frames(&self) -> usize {
        self.crops
            .iter()
            .map(|c| (&c.origin.stream_id, c.origin.frame_index))
            .collect::<HashSet<_>>()
            .len()
    }
}

/// Where one crop sits inside a composite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub origin: CropOrigin,
    /// Crop position on the canvas, border excluded.
    pub composite_box: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeFrame {
    pub composition_id: u64,
    pub canvas: PixelBuffer,
    pub placements: Vec<Placement>,
    pub border_width: u32,
    /// Canvas side divided by the model input side, set by [`resize_to_input`].
    pub scale_factor: f64,
    /// Produced while draining the pool at end of input.
    pub drain: bool,
}

/// Sidecar record written next to dumped composites.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlacementMap {
    pub composition_id: u64,
    pub canvas_side: u32,
    pub scale_factor: f64,
    pub placements: Vec<PlacementRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlacementRecord {
    pub stream_id: StreamId,
    pub frame_index: u64,
    pub scene_box: BoundingBox,
    pub composite_box: BoundingBox,
}

impl CompositeFrame {
    pub fn canvas_side(&self) -> u32 {
        self.canvas.width()
    }

    /// Distinct camera frames represented.
    pub fn source_frames(&self) -> Vec<(StreamId, u64)> {
        let mut seen = HashSet::new();
        self.placements
            .iter()
            .map(|p| (p.origin.stream_id.clone(), p.origin.frame_index))
            .filter(|k| seen.insert(k.clone()))
            .collect()
    }

    pub fn placement_map(&self) -> PlacementMap {
        PlacementMap {
            composition_id: self.composition_id,
            canvas_side: self.canvas_side(),
            scale_factor: self.scale_factor,
            placements: self
                .placements
                .iter()
                .map(|p| PlacementRecord {
                    stream_id: p.origin.stream_id.clone(),
                    frame_index: p.origin.frame_index,
                    scene_box: p.origin.scene_box,
                    composite_box: p.composite_box,
                })
                .collect(),
        }
    }

    /// A single camera frame letterboxed into a square canvas, used by the
    /// full-frame baseline.
    pub fn full_frame(
        composition_id: u64,
        stream_id: StreamId,
        frame_index: u64,
        frame: &PixelBuffer,
        arrival_seq: u64,
    ) -> Self {
        let side = frame.width().max(frame.height());
        let mut canvas = PixelBuffer::new(side, side);
        canvas.blit(frame, 0, 0);
        let scene_box = BoundingBox::new(0, 0, frame.width(), frame.height());
        Self {
            composition_id,
            canvas,
            placements: vec![Placement {
                origin: CropOrigin {
                    stream_id,
                    frame_index,
                    scene_box,
                    arrival_seq,
                },
                composite_box: scene_box,
            }],
            border_width: 0,
            scale_factor: 1.0,
            drain: false,
        }
    }
}

/// Paint `crops` at their packed positions on a black `side × side` canvas.
fn render(
    composition_id: u64,
    side: u32,
    border: u32,
    placed: Vec<(ObjectCrop, BoundingBox)>,
) -> CompositeFrame {
    let mut canvas = PixelBuffer::new(side.max(1), side.max(1));
    let placements = placed
        .into_iter()
        .map(|(crop, composite_box)| {
            canvas.blit(&crop.pixels, composite_box.x, composite_box.y);
            Placement {
                origin: crop.origin,
                composite_box,
            }
        })
        .collect();
    CompositeFrame {
        composition_id,
        canvas,
        placements,
        border_width: border,
        scale_factor: 1.0,
        drain: false,
    }
}

fn pack_items(crops: &[&ObjectCrop]) -> Vec<PackItem> {
    crops
        .iter()
        .map(|c| PackItem {
            w: c.width(),
            h: c.height(),
            arrival_seq: c.arrival_seq(),
        })
        .collect()
}

/// Pool indices of the candidate set for one composition, in FCFS order.
fn select_candidates(pool: &Pool, policy: &CompositionPolicy, border: u32) -> Vec<usize> {
    match *policy {
        CompositionPolicy::Elastic { max_frames } => {
            let mut frames: Vec<(&StreamId, u64)> = Vec::new();
            let mut chosen = Vec::new();
            for (i, c) in pool.crops.iter().enumerate() {
                let key = (&c.origin.stream_id, c.origin.frame_index);
                if !frames.contains(&key) {
                    if frames.len() == max_frames {
                        continue;
                    }
                    frames.push(key);
                }
                chosen.push(i);
            }
            chosen
        }
        CompositionPolicy::DownscaleLimit { .. } => {
            let limit = policy.side_limit();
            let mut chosen: Vec<usize> = Vec::new();
            let mut items: Vec<PackItem> = Vec::new();
            for (i, c) in pool.crops.iter().enumerate() {
                items.push(PackItem {
                    w: c.width(),
                    h: c.height(),
                    arrival_seq: c.arrival_seq(),
                });
                if !pack(&items, border, limit).leftover.is_empty() {
                    items.pop();
                    break;
                }
                chosen.push(i);
            }
            chosen
        }
    }
}

/// Build the next composite from the head of `pool`, or `None` when the
/// pool is empty. Placed crops leave the pool; anything packed but not
/// placed stays at its position.
///
/// A crop too large for the downscale-limit canvas on its own is composed
/// alone on a canvas of exactly its bordered size; resizing then shrinks it
/// beyond the configured factor.
pub fn compose(
    pool: &mut Pool,
    policy: &CompositionPolicy,
    border: u32,
    composition_id: u64,
) -> Option<CompositeFrame> {
    if pool.is_empty() {
        return None;
    }
    let candidates = select_candidates(pool, policy, border);
    if candidates.is_empty() {
        let crop = pool.crops.pop_front().expect("pool is non-empty");
        let side = crop.width().max(crop.height()) + 2 * border;
        let b = BoundingBox::new(border, border, crop.width(), crop.height());
        return Some(render(composition_id, side, border, vec![(crop, b)]));
    }

    let refs: Vec<&ObjectCrop> = candidates.iter().map(|&i| &pool.crops[i]).collect();
    let result = pack(&pack_items(&refs), border, policy.side_limit());
    let mut slot_of: Vec<Option<BoundingBox>> = vec![None; pool.len()];
    // Placement order on the canvas follows the packing order.
    let order: Vec<usize> = result.placements.iter().map(|&(k, _)| candidates[k]).collect();
    for &(k, b) in &result.placements {
        slot_of[candidates[k]] = Some(b);
    }

    let mut remaining = VecDeque::with_capacity(pool.len());
    let mut taken: Vec<Option<ObjectCrop>> = Vec::with_capacity(pool.len());
    for (i, crop) in pool.crops.drain(..).enumerate() {
        if slot_of[i].is_some() {
            taken.push(Some(crop));
        } else {
            taken.push(None);
            remaining.push_back(crop);
        }
    }
    pool.crops = remaining;

    let placed = order
        .into_iter()
        .map(|i| (taken[i].take().expect("placed once"), slot_of[i].expect("placed")))
        .collect();
    Some(render(composition_id, result.canvas_side, border, placed))
}

/// Counts for the conservation invariant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposerStats {
    pub crops_in: u64,
    pub crops_placed: u64,
    pub crops_dropped: u64,
    pub compositions: u64,
    pub drain_compositions: u64,
}

/// Single-consumer composition loop state: the pool, the policy and the
/// monotone composition counter.
#[derive(Debug)]
pub struct Composer {
    pool: Pool,
    policy: CompositionPolicy,
    border: u32,
    next_id: u64,
    stats: ComposerStats,
}

impl Composer {
    pub fn new(policy: CompositionPolicy, border: u32, capacity: usize) -> Self {
        Self {
            pool: Pool::with_capacity(capacity),
            policy,
            border,
            next_id: 0,
            stats: ComposerStats::default(),
        }
    }

    pub fn policy(&self) -> &CompositionPolicy {
        &self.policy
    }

    pub fn pool(&self) -> &Pool {
        &self.pool
    }

    pub fn enqueue(&mut self, crop: ObjectCrop) {
        self.stats.crops_in += 1;
        self.stats.crops_dropped += self.pool.enqueue(crop) as u64;
    }

    pub fn compose(&mut self) -> Option<CompositeFrame> {
        let frame = compose(&mut self.pool, &self.policy, self.border, self.next_id)?;
        self.next_id += 1;
        self.stats.compositions += 1;
        self.stats.crops_placed += frame.placements.len() as u64;
        Some(frame)
    }

    /// Whether the next composition would be full: under the elastic policy
    /// the pool holds at least `max_frames` camera frames; under the
    /// downscale limit the pool no longer fits on one canvas.
    pub fn ready(&self) -> bool {
        if self.pool.is_empty() {
            return false;
        }
        match self.policy {
            CompositionPolicy::Elastic { max_frames } => self.pool.pending_frames() >= max_frames,
            CompositionPolicy::DownscaleLimit { .. } => {
                select_candidates(&self.pool, &self.policy, self.border).len() < self.pool.len()
            }
        }
    }

    /// Compose whatever is left at end of input.
    pub fn drain(&mut self) -> Vec<CompositeFrame> {
        let mut out = Vec::new();
        while let Some(mut frame) = self.compose() {
            frame.drain = true;
            self.stats.drain_compositions += 1;
            out.push(frame);
        }
        out
    }

    /// Reserve a composition id for a composite built elsewhere (baseline).
    pub fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn stats(&self) -> ComposerStats {
        ComposerStats {
            crops_dropped: self.pool.dropped(),
            ..self.stats
        }
    }
}

/// Resize the canvas to the model input and record the scale factor.
pub fn resize_to_input(composite: &mut CompositeFrame, input_side: u32) -> PixelBuffer {
    assert!(input_side >= 1, "model input side must be positive");
    composite.scale_factor = f64::from(composite.canvas_side()) / f64::from(input_side);
    resize_bilinear(&composite.canvas, input_side, input_side)
}
