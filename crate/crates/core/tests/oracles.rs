//! Checks on the reference implementations themselves.

mod common;

use common::{brute_force_ap, count_pixels, fits_exhaustive, optimal_lattice_side};
use mosaic_core::geometry::BoundingBox;

#[test]
fn exhaustive_packer_on_hand_cases() {
    assert!(fits_exhaustive(&[(60, 60), (60, 60)], 120));
    assert!(!fits_exhaustive(&[(60, 60), (60, 60)], 119));
    assert!(fits_exhaustive(&[(60, 60); 4], 120));
    assert!(!fits_exhaustive(&[(60, 60); 5], 179));
    assert!(fits_exhaustive(&[(60, 60); 5], 180));
    // 10×30 beside a 20×10 stacked on a 20×20.
    assert!(fits_exhaustive(&[(10, 30), (20, 10), (20, 20)], 30));
    assert!(!fits_exhaustive(&[(10, 30), (20, 10), (20, 21)], 30));
    assert_eq!(optimal_lattice_side(&[(14, 14)]), 32);
    assert_eq!(optimal_lattice_side(&[(44, 44); 5]), 160);
}

#[test]
fn prefix_envelope_ap_on_hand_cases() {
    assert_eq!(brute_force_ap(&[true, false, true], 2), 0.5 + 0.5 * 2.0 / 3.0);
    assert_eq!(brute_force_ap(&[false, false], 1), 0.0);
    assert_eq!(brute_force_ap(&[true], 4), 0.25);
}

#[test]
fn pixel_counter_on_hand_case() {
    let e = [BoundingBox::new(0, 0, 2, 2), BoundingBox::new(1, 1, 2, 2)];
    let g = [BoundingBox::new(2, 2, 2, 2)];
    assert_eq!(count_pixels(&e, &g, 4, 4), (7, 4, 1));
}
