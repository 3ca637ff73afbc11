//! Synthetic datasets on disk: one directory per domain holding `.npy`
//! arrays, plus `manifest.txt` (spec tables and seed) and `config.toml`.
//!
//! ```text
//! out/
//!   config.toml      synthetic config and seed
//!   manifest.txt     natural parameters of every (class, domain) entry
//!   domain_00/ x.npy attributes.npy labels.npy s.npy a.npy z.npy
//! ```

use std::fs;
use std::path::Path;

use dimgcn_core::synth::{generate_dataset, LatentTriple, SyntheticConfig, SyntheticDataset, SyntheticDomain};
use dimgcn_core::tensor::Tensor;
use ndarray::{Array1, Array2};
use ndarray_npy::{read_npy, write_npy};
use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub seed: u64,
    pub synthetic: SyntheticConfig,
}

fn to_array(t: &Tensor) -> Result<Array2<f64>> {
    let (r, c) = t.dims2();
    Array2::from_shape_vec((r, c), t.data().to_vec()).map_err(|e| Error::Npy(e.to_string()))
}

fn from_array(a: Array2<f64>) -> Tensor {
    let (r, c) = a.dim();
    Tensor::new(&[r, c], a.iter().copied().collect())
}

fn write(path: &Path, a: &Array2<f64>) -> Result<()> {
    write_npy(path, a).map_err(|e| Error::Npy(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<Tensor> {
    let a: Array2<f64> = read_npy(path).map_err(|e| Error::Npy(format!("{}: {e}", path.display())))?;
    Ok(from_array(a))
}

pub fn domain_dir(root: &Path, domain: usize) -> std::path::PathBuf {
    root.join(format!("domain_{domain:02}"))
}

pub fn write_dataset(root: &Path, ds: &SyntheticDataset) -> Result<()> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let src = SyntheticSource { seed: ds.world.seed, synthetic: ds.world.config.clone() };
    let cfg_path = root.join("config.toml");
    fs::write(&cfg_path, toml::to_string_pretty(&src)?).map_err(io_err(&cfg_path))?;
    let man_path = root.join("manifest.txt");
    fs::write(&man_path, ds.manifest()).map_err(io_err(&man_path))?;
    for d in &ds.domains {
        let dir = domain_dir(root, d.domain);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write(&dir.join("x.npy"), &to_array(&d.x)?)?;
        write(&dir.join("attributes.npy"), &to_array(&d.attributes)?)?;
        write(&dir.join("s.npy"), &to_array(&d.latents.s)?)?;
        write(&dir.join("a.npy"), &to_array(&d.latents.a)?)?;
        write(&dir.join("z.npy"), &to_array(&d.latents.z)?)?;
        let labels: Array1<i64> = d.labels.iter().map(|&y| y as i64).collect();
        let p = dir.join("labels.npy");
        write_npy(&p, &labels).map_err(|e| Error::Npy(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

pub fn read_source(root: &Path) -> Result<SyntheticSource> {
    let p = root.join("config.toml");
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    toml::from_str(&text).map_err(|source| Error::Toml { path: p, source })
}

/// Loads a written dataset. The generating world is rebuilt from the
/// stored seed and config; the arrays come from disk.
pub fn read_dataset(root: &Path) -> Result<SyntheticDataset> {
    let src = read_source(root)?;
    let mut ds = generate_dataset(&src.synthetic, src.seed)?;
    let mut domains = Vec::new();
    for d in 0..src.synthetic.total_domains() {
        let dir = domain_dir(root, d);
        let p = dir.join("labels.npy");
        let labels: Array1<i64> = read_npy(&p).map_err(|e| Error::Npy(format!("{}: {e}", p.display())))?;
        let labels = labels
            .iter()
            .map(|&y| usize::try_from(y).map_err(|_| format_err!("negative label in {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        domains.push(SyntheticDomain {
            domain: d,
            held_out: d >= src.synthetic.domains,
            x: read(&dir.join("x.npy"))?,
            attributes: read(&dir.join("attributes.npy"))?,
            labels,
            latents: LatentTriple {
                s: read(&dir.join("s.npy"))?,
                a: read(&dir.join("a.npy"))?,
                z: read(&dir.join("z.npy"))?,
            },
        });
    }
    ds.domains = domains;
    Ok(ds)
}
