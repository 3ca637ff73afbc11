//! ROI patch extraction from annotated images.

use dimgcn_core::ingest::BoundingBox;
use image::imageops::{self, FilterType};
use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, Result};

pub const PATCH_SIDE: u32 = 224;

/// Context added around the annotated box before cropping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginPolicy {
    /// The box as annotated.
    Tight,
    /// Fixed number of pixels on every side.
    Pixels(u32),
    /// Fraction of the box side on every side.
    Relative(f64),
}

impl Default for MarginPolicy {
    fn default() -> Self {
        MarginPolicy::Relative(0.1)
    }
}

/// The box grown by the margin policy and clipped to the image.
pub fn expand(b: &BoundingBox, policy: MarginPolicy, width: u32, height: u32) -> Result<BoundingBox> {
    // An outline whose points are collinear encloses nothing.
    if b.x1 <= b.x0 || b.y1 <= b.y0 {
        return Err(format_err!("box ({}, {})-({}, {}) encloses no area", b.x0, b.y0, b.x1, b.y1));
    }
    if b.x0 >= width || b.y0 >= height {
        return Err(format_err!("box starts outside the {width}x{height} image"));
    }
    let (mx, my) = match policy {
        MarginPolicy::Tight => (0, 0),
        MarginPolicy::Pixels(p) => (p, p),
        MarginPolicy::Relative(f) => {
            if !(f >= 0.0) {
                return Err(format_err!("relative margin must be non-negative"));
            }
            ((f * f64::from(b.width())).round() as u32, (f * f64::from(b.height())).round() as u32)
        }
    };
    Ok(BoundingBox {
        x0: b.x0.saturating_sub(mx),
        y0: b.y0.saturating_sub(my),
        x1: b.x1.saturating_add(mx).min(width - 1),
        y1: b.y1.saturating_add(my).min(height - 1),
    })
}

/// Crops one ROI and resizes it to `side x side`.
pub fn crop_roi(img: &GrayImage, b: &BoundingBox, policy: MarginPolicy, side: u32) -> Result<GrayImage> {
    let r = expand(b, policy, img.width(), img.height())?;
    let patch = imageops::crop_imm(img, r.x0, r.y0, r.width(), r.height()).to_image();
    if patch.dimensions() == (side, side) {
        return Ok(patch);
    }
    Ok(imageops::resize(&patch, side, side, FilterType::Triangle))
}

/// One patch per box, in order.
pub fn crop_rois(img: &GrayImage, boxes: &[BoundingBox], policy: MarginPolicy, side: u32) -> Result<Vec<GrayImage>> {
    boxes.iter().map(|b| crop_roi(img, b, policy, side)).collect()
}
