//! Partial reconstructions exported as PNG files with a CSV index.

use std::fs;
use std::path::Path;

use dimgcn_core::encoders::InputShape;
use dimgcn_core::heads::LatentSubset;
use dimgcn_core::model::DimGcn;
use dimgcn_core::tensor::Tensor;
use image::GrayImage;

use crate::error::{format_err, io_err, Result};

fn to_png(data: &[f64], h: usize, w: usize) -> GrayImage {
    let px = data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    GrayImage::from_raw(w as u32, h as u32, px).expect("buffer matches dimensions")
}

/// Writes `sample_<i>_input.png` and `sample_<i>_<subset>.png` for every
/// row of `x` and subset, plus `reconstructions.csv` listing them.
pub fn export_reconstructions(
    model: &DimGcn,
    x: &Tensor,
    domain: usize,
    subsets: &[LatentSubset],
    out: &Path,
) -> Result<usize> {
    let (h, w) = match model.config.encoder.input {
        InputShape::Image { channels: 1, height, width } => (height, width),
        ref other => return Err(format_err!("image export needs single-channel image input, model takes {other:?}")),
    };
    fs::create_dir_all(out).map_err(io_err(out))?;
    let n = x.shape()[0];
    let per = h * w;
    let index = out.join("reconstructions.csv");
    let mut csv = csv::Writer::from_path(&index)?;
    csv.write_record(["sample", "subset", "file"])?;
    let mut written = 0;
    for i in 0..n {
        let name = format!("sample_{i:04}_input.png");
        to_png(&x.data()[i * per..(i + 1) * per], h, w).save(out.join(&name))?;
        csv.write_record([i.to_string().as_str(), "input", name.as_str()])?;
        written += 1;
    }
    for subset in subsets {
        if subset.is_empty() {
            return Err(format_err!("empty latent subset"));
        }
        let rec = model.reconstruct(x, domain, *subset)?;
        let label = subset.label();
        for i in 0..n {
            let name = format!("sample_{i:04}_{}.png", label.replace('+', ""));
            to_png(&rec.data()[i * per..(i + 1) * per], h, w).save(out.join(&name))?;
            csv.write_record([i.to_string().as_str(), label.as_str(), name.as_str()])?;
            written += 1;
        }
    }
    csv.flush().map_err(io_err(&index))?;
    Ok(written)
}
