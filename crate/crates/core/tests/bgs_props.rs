use proptest::prelude::*;

use mosaic_core::bgs::{
    ptp_mask, BgsConfig, BgsError, BgsMethod, GaussianMixtureModel, MogParams, MovingAverageModel, PtpParams,
    Subtractor,
};
use mosaic_core::raster::{gaussian_blur, BinaryMask, GrayBuffer, PixelBuffer};

/// Direct 2-D Gaussian convolution in f64 with `gfedcb|abcdefgh|gfedcba`
/// borders.
fn blur_direct(src: &GrayBuffer, ksize: u32) -> Vec<f64> {
    let sigma = 0.3 * ((f64::from(ksize) - 1.0) * 0.5 - 1.0) + 0.8;
    let r = (ksize / 2) as i64;
    let g: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = g.iter().sum();
    let (w, h) = (i64::from(src.width()), i64::from(src.height()));
    let mirror = |i: i64, n: i64| -> i64 {
        if n == 1 {
            return 0;
        }
        let period = 2 * n - 2;
        let m = i.rem_euclid(period);
        if m < n { m } else { period - m }
    };
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let v = f64::from(src.get(mirror(x + dx, w) as u32, mirror(y + dy, h) as u32));
                    acc += v * g[(dy + r) as usize] * g[(dx + r) as usize];
                }
            }
            out[(y * w + x) as usize] = acc / (norm * norm);
        }
    }
    out
}

fn gray_frames() -> impl Strategy<Value = GrayBuffer> {
    (1u32..=20, 1u32..=20).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), (w * h) as usize)
            .prop_map(move |d| GrayBuffer::from_raw(w, h, d).expect("sized"))
    })
}

fn gray_to_rgb(g: &GrayBuffer) -> PixelBuffer {
    let data = g.data().iter().flat_map(|&v| [v, v, v]).collect();
    PixelBuffer::from_raw(g.width(), g.height(), data).expect("sized")
}

fn subset(a: &BinaryMask, b: &BinaryMask) -> bool {
    a.data().iter().zip(b.data()).all(|(&x, &y)| !x || y)
}

fn color_sequence() -> impl Strategy<Value = Vec<PixelBuffer>> {
    prop::collection::vec(prop::collection::vec(any::<u8>(), 6 * 4 * 3), 1..25)
        .prop_map(|frames| frames.into_iter().map(|d| PixelBuffer::from_raw(6, 4, d).expect("sized")).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn separable_blur_matches_direct_convolution(src in gray_frames(), k in prop::sample::select(vec![3u32, 5, 7])) {
        let fast = gaussian_blur(&src, k);
        let exact = blur_direct(&src, k);
        for (i, (&f, &e)) in fast.data().iter().zip(&exact).enumerate() {
            prop_assert!((f64::from(f) - e).abs() <= 0.5 + 1e-3, "pixel {}: {} vs {}", i, f, e);
        }
    }

    #[test]
    fn higher_threshold_gives_a_subset_mask(
        bg in gray_frames(),
        shift in prop::collection::vec(any::<u8>(), 400),
        t1 in 1u8..120,
        dt in 0u8..120,
    ) {
        let frame: Vec<u8> = bg.data().iter().zip(&shift).map(|(&b, &s)| b.wrapping_add(s)).collect();
        let frame = GrayBuffer::from_raw(bg.width(), bg.height(), frame).expect("sized");
        let mut model = MovingAverageModel::new(PtpParams::default());
        model.update(0, &gray_to_rgb(&bg)).expect("dims");
        let cfg = |t: u8| BgsConfig { diff_threshold: t, ..BgsConfig::with_method(BgsMethod::PtpMean) };
        let rgb = gray_to_rgb(&frame);
        let low = ptp_mask(&model, &rgb, &cfg(t1)).expect("initialized");
        let high = ptp_mask(&model, &rgb, &cfg(t1.saturating_add(dt))).expect("initialized");
        prop_assert!(subset(&high, &low));
    }

    #[test]
    fn mixture_weights_stay_normalized(frames in color_sequence(), components in 1usize..=8) {
        let mut m = GaussianMixtureModel::new(MogParams { components, ..MogParams::default() });
        for f in &frames {
            m.update(f).expect("dims");
        }
        for y in 0..4 {
            for x in 0..6 {
                let sum = m.weight_sum(x, y).expect("initialized");
                prop_assert!((sum - 1.0).abs() <= 1e-6, "weights sum to {}", sum);
                let comps = m.components_at(x, y).expect("initialized");
                prop_assert!(!comps.is_empty() && comps.len() <= components);
                prop_assert!(comps.iter().all(|c| c.0 > 0.0 && c.1 > 0.0));
            }
        }
    }

    #[test]
    fn subtraction_is_deterministic(frames in color_sequence(), method in prop::sample::select(BgsMethod::ALL.to_vec())) {
        let cfg = BgsConfig::with_method(method);
        let run = || -> Vec<Option<BinaryMask>> {
            let mut sub = Subtractor::new(&cfg).expect("valid config");
            frames
                .iter()
                .enumerate()
                .map(|(i, f)| sub.process(i as u64 * 10, f, &cfg).expect("dims"))
                .collect()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn patch_mask_matches_the_direct_pipeline() {
    let (w, h) = (48, 40);
    let bg = GrayBuffer::filled(w, h, 0);
    let mut data = vec![0u8; (w * h) as usize];
    for y in 10..30 {
        for x in 14..34 {
            data[(y * w + x) as usize] = 200;
        }
    }
    let frame = GrayBuffer::from_raw(w, h, data).expect("sized");
    let mut model = MovingAverageModel::new(PtpParams::default());
    model.update(0, &gray_to_rgb(&bg)).expect("dims");
    let cfg = BgsConfig::with_method(BgsMethod::PtpMean);
    let mask = ptp_mask(&model, &gray_to_rgb(&frame), &cfg).expect("initialized");

    let a = blur_direct(&bg, 5);
    let b = blur_direct(&frame, 5);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let d = (a[i] - b[i]).abs();
            // Away from the rounding boundary the two pipelines must agree.
            if (d - 30.0).abs() > 1.0 {
                assert_eq!(mask.get(x, y), d > 30.0, "pixel ({x}, {y}) diff {d}");
            }
            // Blur spreads the patch by at most the kernel radius.
            let near = (12..36).contains(&x) && (8..32).contains(&y);
            let deep = (16..32).contains(&x) && (12..28).contains(&y);
            if deep {
                assert!(mask.get(x, y));
            }
            if !near {
                assert!(!mask.get(x, y));
            }
        }
    }
}

#[test]
fn every_method_rejects_a_resized_stream() {
    let small = PixelBuffer::filled(16, 12, [50, 50, 50]);
    let large = PixelBuffer::filled(18, 12, [50, 50, 50]);
    for method in BgsMethod::ALL {
        let cfg = BgsConfig::with_method(method);
        let mut sub = Subtractor::new(&cfg).expect("valid config");
        sub.process(0, &small, &cfg).expect("first frame");
        sub.process(10, &small, &cfg).expect("second frame");
        let err = sub.process(20, &large, &cfg).expect_err("size change");
        assert!(matches!(err, BgsError::DimensionMismatch { .. }), "{method}: {err}");
    }
}
