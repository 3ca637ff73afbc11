//! Builds a patch directory and manifest from a DDSM-style tree.
//!
//! Every `*.OVERLAY` file is paired with the PNG image of the same stem
//! (DDSM ships LJPEG, which must be converted beforehand). The case id is
//! taken from the two enclosing directories, e.g.
//! `benign_01/case0029/A_0029_1.LEFT_CC.OVERLAY` -> `benign_01_case0029`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use dimgcn_core::ingest::attributes::mass_annotations;
use dimgcn_core::ingest::{encode_attribute_vector, parse_overlay, patient_split, patient_split_pinned, SplitRatios};
use walkdir::WalkDir;

use crate::crop::{crop_roi, MarginPolicy};
use crate::error::{format_err, io_err, Result};
use crate::manifest::{write_manifest, ManifestRow};

#[derive(Clone, Debug)]
pub struct PrepareOptions {
    pub dataset: String,
    pub domain: usize,
    pub seed: u64,
    pub ratios: SplitRatios,
    /// Case ids forced into the test split.
    pub pinned: Option<BTreeSet<String>>,
    pub margin: MarginPolicy,
    pub side: u32,
    /// Abort on the first file that cannot be used instead of skipping it.
    pub strict: bool,
}

#[derive(Clone, Debug, Default)]
pub struct PrepareSummary {
    pub overlays: usize,
    pub cases: usize,
    pub patches: usize,
    pub skipped: Vec<(PathBuf, String)>,
    /// Pinned cases that were not found under the root.
    pub missing_pinned: Vec<String>,
}

pub fn case_id_from_path(overlay: &Path) -> Option<String> {
    let case = overlay.parent()?;
    let volume = case.parent()?;
    let c = case.file_name()?.to_str()?;
    let v = volume.file_name()?.to_str()?;
    if c.starts_with("case") {
        Some(format!("{v}_{c}"))
    } else {
        Some(c.to_string())
    }
}

fn is_overlay(p: &Path) -> bool {
    p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("overlay"))
}

struct Found {
    case: String,
    overlay: PathBuf,
    image: PathBuf,
}

fn scan(root: &Path) -> Result<Vec<Found>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| format_err!("walking {}: {e}", root.display()))?;
        let p = entry.path();
        if !entry.file_type().is_file() || !is_overlay(p) {
            continue;
        }
        let case = case_id_from_path(p).ok_or_else(|| format_err!("{}: cannot derive a case id", p.display()))?;
        out.push(Found { case, overlay: p.to_path_buf(), image: p.with_extension("png") });
    }
    Ok(out)
}

/// Crops every mass ROI under `root` into `out/patches` and writes
/// `out/manifest.csv`.
pub fn prepare(root: &Path, out: &Path, opts: &PrepareOptions) -> Result<PrepareSummary> {
    let patch_dir = out.join("patches");
    fs::create_dir_all(&patch_dir).map_err(io_err(&patch_dir))?;
    let found = scan(root)?;
    let mut summary = PrepareSummary { overlays: found.len(), ..PrepareSummary::default() };
    let mut rows: Vec<ManifestRow> = Vec::new();
    let skip = |summary: &mut PrepareSummary, p: &Path, why: String| -> Result<()> {
        if opts.strict {
            return Err(format_err!("{}: {why}", p.display()));
        }
        summary.skipped.push((p.to_path_buf(), why));
        Ok(())
    };
    for f in &found {
        let text = fs::read_to_string(&f.overlay).map_err(io_err(&f.overlay))?;
        let anns = match parse_overlay(&text).and_then(|file| mass_annotations(&f.case, &file)) {
            Ok(a) => a,
            Err(e) => {
                skip(&mut summary, &f.overlay, e.to_string())?;
                continue;
            }
        };
        if anns.is_empty() {
            continue;
        }
        let img = match image::open(&f.image) {
            Ok(i) => i.to_luma8(),
            Err(e) => {
                skip(&mut summary, &f.image, e.to_string())?;
                continue;
            }
        };
        let stem = f.overlay.file_stem().and_then(|s| s.to_str()).unwrap_or("image").replace('.', "_");
        for ann in anns {
            let Some(roi) = ann.roi else {
                skip(&mut summary, &f.overlay, format!("abnormality {} has no BOUNDARY outline", ann.abnormality))?;
                continue;
            };
            let patch = match crop_roi(&img, &roi, opts.margin, opts.side) {
                Ok(p) => p,
                Err(e) => {
                    skip(&mut summary, &f.overlay, e.to_string())?;
                    continue;
                }
            };
            let rel = PathBuf::from("patches").join(format!("{}_{stem}_{}.png", f.case, ann.abnormality));
            patch.save(out.join(&rel))?;
            let g = encode_attribute_vector(&ann);
            rows.push(ManifestRow {
                case_id: f.case.clone(),
                abnormality: ann.abnormality,
                dataset: opts.dataset.clone(),
                domain: opts.domain,
                split: dimgcn_core::ingest::Split::Train,
                label: ann.pathology.label(),
                patch: rel,
                attributes: g.map(|v| v as u8),
            });
        }
    }
    let cases: Vec<String> = rows.iter().map(|r| r.case_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    summary.cases = cases.len();
    let splits: BTreeMap<String, _> = match &opts.pinned {
        Some(pinned) => {
            summary.missing_pinned = pinned.iter().filter(|p| !cases.contains(p)).cloned().collect();
            patient_split_pinned(&cases, pinned, opts.ratios, opts.seed)?
        }
        None => patient_split(&cases, opts.ratios, opts.seed)?,
    };
    for r in &mut rows {
        r.split = splits[&r.case_id];
    }
    summary.patches = rows.len();
    write_manifest(&out.join("manifest.csv"), &rows)?;
    Ok(summary)
}
