//! Patch manifests: one CSV row per ROI patch.
//!
//! Column order is fixed:
//! `case_id, abnormality, dataset, domain, split, label, patch`, then one
//! 0/1 column per attribute node in vocabulary order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dimgcn_core::gcn::ATTRIBUTE_NODES;
use dimgcn_core::ingest::Split;
use dimgcn_core::tensor::Tensor;
use dimgcn_core::train::DomainData;

use crate::error::{format_err, io_err, Result};

pub const FIXED_COLUMNS: [&str; 7] = ["case_id", "abnormality", "dataset", "domain", "split", "label", "patch"];

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub case_id: String,
    pub abnormality: u32,
    pub dataset: String,
    pub domain: usize,
    pub split: Split,
    pub label: usize,
    /// Relative to the manifest's directory.
    pub patch: PathBuf,
    pub attributes: [u8; 12],
}

pub fn header() -> Vec<String> {
    FIXED_COLUMNS.iter().chain(ATTRIBUTE_NODES.iter()).map(|s| s.to_string()).collect()
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format_err!("unknown split {s:?}"))
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header())?;
    for r in rows {
        let mut rec = vec![
            r.case_id.clone(),
            r.abnormality.to_string(),
            r.dataset.clone(),
            r.domain.to_string(),
            r.split.name().to_string(),
            r.label.to_string(),
            r.patch.to_string_lossy().into_owned(),
        ];
        rec.extend(r.attributes.iter().map(u8::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if head != header() {
        return Err(format_err!("{}: unexpected header {head:?}", path.display()));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |c: usize| -> Result<usize> {
            rec[c].parse().map_err(|_| format_err!("{}:{line}: bad {} {:?}", path.display(), FIXED_COLUMNS[c], &rec[c]))
        };
        let mut attributes = [0u8; 12];
        for (k, slot) in attributes.iter_mut().enumerate() {
            *slot = match &rec[7 + k] {
                "0" => 0,
                "1" => 1,
                v => return Err(format_err!("{}:{line}: attribute value {v:?} is not 0/1", path.display())),
            };
        }
        out.push(ManifestRow {
            case_id: rec[0].to_string(),
            abnormality: u32::try_from(num(1)?).map_err(|_| format_err!("{}:{line}: abnormality out of range", path.display()))?,
            dataset: rec[2].to_string(),
            domain: num(3)?,
            split: parse_split(&rec[4])?,
            label: num(5)?,
            patch: PathBuf::from(&rec[6]),
            attributes,
        });
    }
    Ok(out)
}

/// Reads the patches of `rows` as `[n, 1, side, side]` intensities in
/// `[0, 1]`, resolving patch paths against `root`.
pub fn load_rows(root: &Path, rows: &[&ManifestRow], side: usize) -> Result<DomainData> {
    let mut x = Vec::with_capacity(rows.len() * side * side);
    let mut attrs = Vec::with_capacity(rows.len() * 12);
    let mut labels = Vec::with_capacity(rows.len());
    for r in rows {
        let p = root.join(&r.patch);
        let img = image::open(&p)?.to_luma8();
        if img.dimensions() != (side as u32, side as u32) {
            return Err(format_err!("{}: patch is {:?}, expected {side}x{side}", p.display(), img.dimensions()));
        }
        x.extend(img.as_raw().iter().map(|&v| f64::from(v) / 255.0));
        attrs.extend(r.attributes.iter().map(|&v| f64::from(v)));
        labels.push(r.label);
    }
    let n = rows.len();
    Ok(DomainData {
        x: Tensor::new(&[n, 1, side, side], x),
        attributes: Tensor::new(&[n, 12], attrs),
        labels,
    })
}

/// Rows of several manifests, each tagged with its manifest directory.
pub struct ManifestSet {
    pub rows: Vec<(PathBuf, ManifestRow)>,
}

impl ManifestSet {
    pub fn load(paths: &[PathBuf]) -> Result<Self> {
        let mut rows = Vec::new();
        for p in paths {
            let root = p.parent().map(Path::to_path_buf).unwrap_or_default();
            rows.extend(read_manifest(p)?.into_iter().map(|r| (root.clone(), r)));
        }
        Ok(Self { rows })
    }

    pub fn datasets(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for (_, r) in &self.rows {
            *m.entry(r.dataset.as_str()).or_insert(0) += 1;
        }
        m
    }

    /// Patches of one dataset and split.
    pub fn domain_data(&self, dataset: &str, split: Split, side: usize) -> Result<DomainData> {
        let mut groups: BTreeMap<&Path, Vec<&ManifestRow>> = BTreeMap::new();
        for (root, r) in &self.rows {
            if r.dataset == dataset && r.split == split {
                groups.entry(root.as_path()).or_default().push(r);
            }
        }
        if groups.is_empty() {
            return Err(format_err!("dataset {dataset:?} has no {} rows", split.name()));
        }
        let parts = groups.into_iter().map(|(root, rows)| load_rows(root, &rows, side)).collect::<Result<Vec<_>>>()?;
        Ok(DomainData::concat(&parts.iter().collect::<Vec<_>>())?)
    }
}
