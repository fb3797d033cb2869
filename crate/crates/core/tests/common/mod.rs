//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mosaic_core::composer::SIDE_STEP;
use mosaic_core::geometry::BoundingBox;
use mosaic_core::pipeline::{gen_synthetic, RunConfig, SynthDataset, SynthSpec};

/// Pairwise disjointness of half-open boxes.
pub fn disjoint(a: &BoundingBox, b: &BoundingBox) -> bool {
    a.x + a.w <= b.x || b.x + b.w <= a.x || a.y + a.h <= b.y || b.y + b.h <= a.y
}

fn subset_sums(values: &[u32], cap: u32) -> Vec<u32> {
    let mut sums = vec![0u32];
    for &v in values {
        let more: Vec<u32> = sums.iter().map(|s| s + v).filter(|&s| s <= cap).collect();
        sums.extend(more);
        sums.sort_unstable();
        sums.dedup();
    }
    sums
}

/// Whether `items` (already inflated by any border) can be placed without
/// overlap inside a `side × side` square.
///
/// Only positions that are sums of other items' extents along the same axis
/// are tried; any feasible packing can be pushed left and up onto such
/// coordinates, so the search is exhaustive.
pub fn fits_exhaustive(items: &[(u32, u32)], side: u32) -> bool {
    if items.iter().any(|&(w, h)| w > side || h > side) {
        return false;
    }
    let area: u64 = items.iter().map(|&(w, h)| u64::from(w) * u64::from(h)).sum();
    if area > u64::from(side) * u64::from(side) {
        return false;
    }
    // Largest first keeps the search tree small.
    let mut order: Vec<(u32, u32)> = items.to_vec();
    order.sort_by(|a, b| (b.0 * b.1).cmp(&(a.0 * a.1)).then(b.cmp(a)));
    let candidates: Vec<Vec<(u32, u32)>> = (0..order.len())
        .map(|i| {
            let others: Vec<&(u32, u32)> = order
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, s)| s)
                .collect();
            let ws: Vec<u32> = others.iter().map(|s| s.0).collect();
            let hs: Vec<u32> = others.iter().map(|s| s.1).collect();
            let xs = subset_sums(&ws, side - order[i].0);
            let ys = subset_sums(&hs, side - order[i].1);
            ys.iter()
                .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
                .collect()
        })
        .collect();
    let mut placed: Vec<BoundingBox> = Vec::new();
    place(&order, &candidates, 0, &mut placed, None)
}

fn place(
    items: &[(u32, u32)],
    candidates: &[Vec<(u32, u32)>],
    i: usize,
    placed: &mut Vec<BoundingBox>,
    floor: Option<usize>,
) -> bool {
    if i == items.len() {
        return true;
    }
    let (w, h) = items[i];
    // Identical consecutive items are interchangeable: enforce increasing
    // candidate index to skip permutations.
    let start = match floor {
        Some(f) if i > 0 && items[i - 1] == items[i] => f,
        _ => 0,
    };
    for (k, &(x, y)) in candidates[i].iter().enumerate().skip(start) {
        let b = BoundingBox::new(x, y, w, h);
        if placed.iter().all(|p| disjoint(p, &b)) {
            placed.push(b);
            if place(items, candidates, i + 1, placed, Some(k + 1)) {
                return true;
            }
            placed.pop();
        }
    }
    false
}

/// Smallest multiple of the canvas step that admits a packing of `items`.
pub fn optimal_lattice_side(items: &[(u32, u32)]) -> u32 {
    let mut side = SIDE_STEP;
    loop {
        if fits_exhaustive(items, side) {
            return side;
        }
        side += SIDE_STEP;
    }
}

/// Smallest square side, at unit granularity, that admits a packing of
/// `items`.
pub fn optimal_side(items: &[(u32, u32)]) -> u32 {
    let area: u64 = items.iter().map(|&(w, h)| u64::from(w) * u64::from(h)).sum();
    let mut side = items
        .iter()
        .map(|&(w, h)| w.max(h))
        .max()
        .unwrap_or(1)
        .max((area as f64).sqrt().floor() as u32);
    while !fits_exhaustive(items, side) {
        side += 1;
    }
    side
}

/// AP as the mean, over ground truths, of the best precision achieved at
/// any prefix reaching the recall level where each hit occurs. Flags are in
/// descending score order.
pub fn brute_force_ap(flags: &[bool], total_gt: usize) -> f64 {
    let n = flags.len();
    let prefix_precision: Vec<f64> = (1..=n)
        .map(|k| flags[..k].iter().filter(|&&f| f).count() as f64 / k as f64)
        .collect();
    let mut ap = 0.0;
    for k in 0..n {
        if flags[k] {
            let best = prefix_precision[k..].iter().cloned().fold(0.0, f64::max);
            ap += best / total_gt as f64;
        }
    }
    ap
}

/// Per-pixel `(extracted, gt, intersection)` counts on a `w × h` grid.
pub fn count_pixels(extracted: &[BoundingBox], gt: &[BoundingBox], w: u32, h: u32) -> (u64, u64, u64) {
    let inside = |boxes: &[BoundingBox], x: u32, y: u32| {
        boxes
            .iter()
            .any(|b| x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h)
    };
    let (mut e, mut g, mut both) = (0, 0, 0);
    for y in 0..h {
        for x in 0..w {
            let (ie, ig) = (inside(extracted, x, y), inside(gt, x, y));
            e += u64::from(ie);
            g += u64::from(ig);
            both += u64::from(ie && ig);
        }
    }
    (e, g, both)
}

/// Generate one synthetic stream under `root` and return its directory.
pub fn synth_stream(root: &Path, name: &str, spec: &SynthSpec) -> SynthDataset {
    gen_synthetic(spec, root, name).expect("synthetic dataset")
}

/// Run configuration over `streams` that evaluates every sampled frame.
pub fn config_for(streams: Vec<PathBuf>) -> RunConfig {
    RunConfig {
        streams,
        min_frames: 0,
        warmup: 0,
        ..RunConfig::default()
    }
}
