mod common;

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;

use common::disjoint;
use mosaic_core::composer::{
    compose, pack, resize_to_input, side_lower_bound, CompositionPolicy, PackItem, Pool, SIDE_STEP,
};
use mosaic_core::dataio::StreamId;
use mosaic_core::extract::{CropOrigin, ObjectCrop};
use mosaic_core::geometry::BoundingBox;
use mosaic_core::raster::PixelBuffer;

/// Crop spec: (stream, frame step, width, height). Frames advance
/// monotonically per stream so arrival order matches capture order.
fn crop_specs() -> impl Strategy<Value = Vec<(u8, bool, u32, u32)>> {
    prop::collection::vec((0u8..3, any::<bool>(), 4u32..=90, 4u32..=90), 1..30)
}

fn build_crops(specs: &[(u8, bool, u32, u32)]) -> Vec<ObjectCrop> {
    let mut frame = [0u64; 3];
    specs
        .iter()
        .enumerate()
        .map(|(seq, &(s, advance, w, h))| {
            if advance {
                frame[s as usize] += 10;
            }
            let shade = (seq * 37 % 200) as u8 + 40;
            let mut pixels = PixelBuffer::filled(w, h, [shade, 255 - shade, s * 60]);
            pixels.put(0, 0, [1, 2, 3]);
            ObjectCrop {
                origin: CropOrigin {
                    stream_id: StreamId::new(format!("s{s}")),
                    frame_index: frame[s as usize],
                    scene_box: BoundingBox::new(seq as u32, 0, w, h),
                    arrival_seq: seq as u64,
                },
                pixels,
            }
        })
        .collect()
}

fn pool_of(crops: &[ObjectCrop]) -> Pool {
    let mut pool = Pool::with_capacity(crops.len());
    for c in crops {
        pool.enqueue(c.clone());
    }
    pool
}

/// Every placement shows its crop's pixels, and the border-inflated slots
/// are pairwise disjoint.
fn check_canvas(crops: &[ObjectCrop], placements: &[(u64, BoundingBox)], canvas: &PixelBuffer, border: u32) {
    let by_seq: HashMap<u64, &ObjectCrop> = crops.iter().map(|c| (c.arrival_seq(), c)).collect();
    for &(seq, b) in placements {
        assert_eq!(canvas.crop(&b), by_seq[&seq].pixels, "placement of crop {seq}");
    }
    for (i, (_, a)) in placements.iter().enumerate() {
        for (_, b) in &placements[i + 1..] {
            assert!(disjoint(&a.inflate(border), &b.inflate(border)), "{a:?} slot overlaps {b:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 400, ..ProptestConfig::default() })]

    #[test]
    fn unlimited_packing_places_everything_on_the_step_grid(
        sizes in prop::collection::vec((1u32..=120, 1u32..=120), 1..25),
        border in 0u32..=3,
    ) {
        let items: Vec<PackItem> = sizes
            .iter()
            .enumerate()
            .map(|(i, &(w, h))| PackItem { w, h, arrival_seq: i as u64 })
            .collect();
        let r = pack(&items, border, None);
        prop_assert!(r.leftover.is_empty());
        prop_assert_eq!(r.placements.len(), items.len());
        prop_assert_eq!(r.canvas_side % SIDE_STEP, 0);
        let inflated: Vec<(u32, u32)> = sizes.iter().map(|&(w, h)| (w + 2 * border, h + 2 * border)).collect();
        prop_assert!(r.canvas_side >= side_lower_bound(&inflated));
    }

    #[test]
    fn packing_is_deterministic(
        sizes in prop::collection::vec((1u32..=80, 1u32..=80), 0..20),
        limit in prop::option::of(32u32..=256),
    ) {
        let items: Vec<PackItem> = sizes
            .iter()
            .enumerate()
            .map(|(i, &(w, h))| PackItem { w, h, arrival_seq: (i * 7 % 11) as u64 })
            .collect();
        prop_assert_eq!(pack(&items, 2, limit), pack(&items, 2, limit));
    }

    #[test]
    fn elastic_composition_takes_whole_frames_in_order(specs in crop_specs(), max_frames in 1usize..=4) {
        let crops = build_crops(&specs);
        let mut pool = pool_of(&crops);
        let policy = CompositionPolicy::Elastic { max_frames };
        let frame = compose(&mut pool, &policy, 2, 0).expect("pool is non-empty");

        // Oracle: the first `max_frames` distinct camera frames in arrival order.
        let mut chosen: Vec<(StreamId, u64)> = Vec::new();
        for c in &crops {
            let key = c.frame_key();
            if !chosen.contains(&key) && chosen.len() < max_frames {
                chosen.push(key);
            }
        }
        let expected: HashSet<u64> = crops
            .iter()
            .filter(|c| chosen.contains(&c.frame_key()))
            .map(ObjectCrop::arrival_seq)
            .collect();
        let placed: HashSet<u64> = frame.placements.iter().map(|p| p.origin.arrival_seq).collect();
        prop_assert_eq!(&placed, &expected);
        prop_assert!(frame.source_frames().len() <= max_frames);
        let rest: Vec<u64> = pool.iter().map(ObjectCrop::arrival_seq).collect();
        let mut rest_sorted = rest.clone();
        rest_sorted.sort_unstable();
        prop_assert_eq!(&rest, &rest_sorted);
        prop_assert_eq!(rest.len() + placed.len(), crops.len());

        let placements: Vec<(u64, BoundingBox)> =
            frame.placements.iter().map(|p| (p.origin.arrival_seq, p.composite_box)).collect();
        check_canvas(&crops, &placements, &frame.canvas, 2);
    }

    #[test]
    fn downscale_composition_takes_a_fifo_prefix(specs in crop_specs(), factor in 0.5f64..=2.0) {
        let crops = build_crops(&specs);
        let mut pool = pool_of(&crops);
        let policy = CompositionPolicy::DownscaleLimit { max_downscale: factor, model_input: 96 };
        let limit = policy.side_limit().expect("bounded");
        let mut composed = 0;
        let mut id = 0;
        while let Some(frame) = compose(&mut pool, &policy, 2, id) {
            id += 1;
            let mut seqs: Vec<u64> = frame.placements.iter().map(|p| p.origin.arrival_seq).collect();
            seqs.sort_unstable();
            let prefix: Vec<u64> = (composed..composed + seqs.len() as u64).collect();
            prop_assert_eq!(&seqs, &prefix);
            composed += seqs.len() as u64;
            if frame.placements.len() > 1 {
                prop_assert!(frame.canvas_side() <= limit);
            }
            let placements: Vec<(u64, BoundingBox)> =
                frame.placements.iter().map(|p| (p.origin.arrival_seq, p.composite_box)).collect();
            check_canvas(&crops, &placements, &frame.canvas, 2);
        }
        prop_assert_eq!(composed, crops.len() as u64);
    }

    #[test]
    fn resize_scale_matches_canvas_over_input(specs in crop_specs(), input in 32u32..=320) {
        let crops = build_crops(&specs);
        let mut pool = pool_of(&crops);
        let mut frame = compose(&mut pool, &CompositionPolicy::Elastic { max_frames: 2 }, 2, 0).expect("non-empty");
        let side = frame.canvas_side();
        let resized = resize_to_input(&mut frame, input);
        prop_assert_eq!(resized.dims(), (input, input));
        prop_assert_eq!(frame.scale_factor, f64::from(side) / f64::from(input));
    }
}

#[test]
fn pool_overflow_drops_the_oldest_crops() {
    let crops = build_crops(&[(0, true, 8, 8); 7]);
    let mut pool = Pool::with_capacity(4);
    let mut dropped = 0;
    for c in &crops {
        dropped += pool.enqueue(c.clone());
    }
    assert_eq!(dropped, 3);
    assert_eq!(pool.dropped(), 3);
    let kept: Vec<u64> = pool.iter().map(ObjectCrop::arrival_seq).collect();
    assert_eq!(kept, [3, 4, 5, 6]);
}
