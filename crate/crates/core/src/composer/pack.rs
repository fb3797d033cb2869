//! Shelf-based first-fit-decreasing packing onto a square canvas.

use crate::geometry::BoundingBox;

/// Canvas sides grow in multiples of this many pixels.
pub const SIDE_STEP: u32 = 32;

/// Size and FCFS rank of one item to pack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackItem {
    pub w: u32,
    pub h: u32,
    pub arrival_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackResult {
    /// `(item index, position excluding the border)`, in placement order.
    pub placements: Vec<(usize, BoundingBox)>,
    /// Indices that did not fit, in arrival order.
    pub leftover: Vec<usize>,
    pub canvas_side: u32,
}

struct Shelf {
    y: u32,
    height: u32,
    used: u32,
}

fn round_up(v: u32, step: u32) -> u32 {
    v.div_ceil(step) * step
}

/// Smallest square side any packing of the given inflated sizes could use.
pub fn side_lower_bound(items: &[(u32, u32)]) -> u32 {
    let area: u64 = items.iter().map(|&(w, h)| u64::from(w) * u64::from(h)).sum();
    let by_area = (area as f64).sqrt().ceil() as u32;
    items
        .iter()
        .map(|&(w, h)| w.max(h))
        .max()
        .unwrap_or(0)
        .max(by_area)
}

/// Place `order` (indices into `sizes`, already sorted) on shelves inside a
/// `side × side` square. Returns placements of the inflated slots and the
/// indices that did not fit.
fn shelf_fill(sizes: &[(u32, u32)], order: &[usize], side: u32) -> (Vec<(usize, u32, u32)>, Vec<usize>) {
    let mut shelves: Vec<Shelf> = Vec::new();
    let mut placed = Vec::with_capacity(order.len());
    let mut rejected = Vec::new();
    for &i in order {
        let (w, h) = sizes[i];
        let last = shelves.len().saturating_sub(1);
        // The open bottom shelf may deepen into free canvas below it.
        if let Some((_, shelf)) = shelves.iter_mut().enumerate().find(|(k, s)| {
            s.used + w <= side && (h <= s.height || (*k == last && s.y + h <= side))
        }) {
            placed.push((i, shelf.used, shelf.y));
            shelf.used += w;
            shelf.height = shelf.height.max(h);
            continue;
        }
        let y = shelves.last().map_or(0, |s| s.y + s.height);
        if w <= side && y + h <= side {
            shelves.push(Shelf { y, height: h, used: w });
            placed.push((i, 0, y));
        } else {
            rejected.push(i);
        }
    }
    (placed, rejected)
}

/// Pack items with a `border`-pixel blank margin on every side.
///
/// Items are sorted by width, then height (both descending), then arrival,
/// and each goes into the first shelf with room, or onto a new shelf below.
/// A shelf is as tall as its tallest item, so the bottom shelf may still
/// deepen while canvas remains beneath it.
/// The canvas starts at the smallest multiple of [`SIDE_STEP`] covering the
/// area and extent lower bounds and grows by one step until everything
/// fits or `side_limit` is reached; at the limit, items that still do not
/// fit are returned as leftover.
pub fn pack(items: &[PackItem], border: u32, side_limit: Option<u32>) -> PackResult {
    pack_with_step(items, border, side_limit, SIDE_STEP)
}

/// [`pack`] with canvas sides quantized to multiples of `step` instead of
/// [`SIDE_STEP`]. A step of 1 yields the tightest side the shelf heuristic
/// can reach.
pub fn pack_with_step(items: &[PackItem], border: u32, side_limit: Option<u32>, step: u32) -> PackResult {
    let step = step.max(1);
    let inflated: Vec<(u32, u32)> = items
        .iter()
        .map(|it| (it.w + 2 * border, it.h + 2 * border))
        .collect();
    let limit = side_limit.unwrap_or(u32::MAX);

    let mut oversized = Vec::new();
    let mut order = Vec::with_capacity(items.len());
    for (i, &(w, h)) in inflated.iter().enumerate() {
        if w.max(h) > limit {
            oversized.push(i);
        } else {
            order.push(i);
        }
    }
    order.sort_by(|&a, &b| {
        let (ia, ib) = (&items[a], &items[b]);
        ib.w.cmp(&ia.w)
            .then(ib.h.cmp(&ia.h))
            .then(ia.arrival_seq.cmp(&ib.arrival_seq))
    });

    if order.is_empty() {
        return PackResult {
            placements: Vec::new(),
            leftover: sorted_by_arrival(oversized, items),
            canvas_side: 0,
        };
    }

    let fitting: Vec<(u32, u32)> = order.iter().map(|&i| inflated[i]).collect();
    let mut side = round_up(side_lower_bound(&fitting).max(1), step).min(limit);
    let (placed, rejected) = loop {
        let (placed, rejected) = shelf_fill(&inflated, &order, side);
        if rejected.is_empty() || side >= limit {
            break (placed, rejected);
        }
        side = side.saturating_add(step).min(limit);
    };

    let placements = placed
        .into_iter()
        .map(|(i, x, y)| (i, BoundingBox::new(x + border, y + border, items[i].w, items[i].h)))
        .collect();
    oversized.extend(rejected);
    PackResult {
        placements,
        leftover: sorted_by_arrival(oversized, items),
        canvas_side: side,
    }
}

fn sorted_by_arrival(mut idx: Vec<usize>, items: &[PackItem]) -> Vec<usize> {
    idx.sort_by_key(|&i| items[i].arrival_seq);
    idx
}
