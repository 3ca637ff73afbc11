use dimgcn::crop::{crop_roi, expand, MarginPolicy};
use dimgcn_core::ingest::BoundingBox;
use image::imageops::{self, FilterType};
use image::{GrayImage, Luma};
use proptest::prelude::*;

fn pattern(w: u32, h: u32) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| Luma([((x * 7 + y * 13) % 251) as u8]))
}

#[test]
fn crop_of_target_size_is_pixel_exact() {
    let img = pattern(300, 200);
    let b = BoundingBox { x0: 40, y0: 30, x1: 71, y1: 61 };
    let patch = crop_roi(&img, &b, MarginPolicy::Tight, 32).unwrap();
    for y in 0..32 {
        for x in 0..32 {
            assert_eq!(patch.get_pixel(x, y), img.get_pixel(40 + x, 30 + y));
        }
    }
}

#[test]
fn whole_image_box_equals_resized_image() {
    let img = pattern(120, 90);
    let b = BoundingBox { x0: 0, y0: 0, x1: 119, y1: 89 };
    let patch = crop_roi(&img, &b, MarginPolicy::Relative(0.25), 64).unwrap();
    assert_eq!(patch, imageops::resize(&img, 64, 64, FilterType::Triangle));
}

#[test]
fn margins_grow_and_clip() {
    let b = BoundingBox { x0: 10, y0: 10, x1: 29, y1: 19 };
    assert_eq!(expand(&b, MarginPolicy::Pixels(5), 100, 100).unwrap(), BoundingBox { x0: 5, y0: 5, x1: 34, y1: 24 });
    assert_eq!(expand(&b, MarginPolicy::Relative(0.1), 100, 100).unwrap(), BoundingBox { x0: 8, y0: 9, x1: 31, y1: 20 });
    assert_eq!(expand(&b, MarginPolicy::Pixels(50), 40, 25).unwrap(), BoundingBox { x0: 0, y0: 0, x1: 39, y1: 24 });
}

#[test]
fn degenerate_boxes_are_errors() {
    let img = pattern(50, 50);
    for b in [
        BoundingBox { x0: 5, y0: 5, x1: 5, y1: 20 },
        BoundingBox { x0: 5, y0: 5, x1: 20, y1: 5 },
        BoundingBox { x0: 60, y0: 5, x1: 70, y1: 20 },
    ] {
        assert!(crop_roi(&img, &b, MarginPolicy::Tight, 16).is_err(), "{b:?}");
    }
    assert!(expand(&BoundingBox { x0: 1, y0: 1, x1: 5, y1: 5 }, MarginPolicy::Relative(-0.5), 10, 10).is_err());
}

proptest! {
    #[test]
    fn expanded_box_contains_clipped_box_and_stays_inside(
        w in 2..400u32, h in 2..400u32, x0 in 0..400u32, y0 in 0..400u32, bw in 1..200u32, bh in 1..200u32,
        frac in 0.0..1.0f64,
    ) {
        prop_assume!(x0 + 1 < w && y0 + 1 < h);
        let b = BoundingBox { x0, y0, x1: x0 + bw, y1: y0 + bh };
        let r = expand(&b, MarginPolicy::Relative(frac), w, h).unwrap();
        prop_assert!(r.x0 <= b.x0 && r.y0 <= b.y0);
        prop_assert!(r.x1 >= b.x1.min(w - 1) && r.y1 >= b.y1.min(h - 1));
        prop_assert!(r.x1 < w && r.y1 < h);
    }
}
