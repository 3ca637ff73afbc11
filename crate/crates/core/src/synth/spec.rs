//! Exponential-family latent laws with Gaussian sufficient statistics
//! `T(u) = [u, u^2]`, and the rank conditions on their natural parameters.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, validation, Result};
use crate::tensor::Tensor;

/// Order of the Gaussian sufficient statistic.
pub const STAT_ORDER: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    S,
    A,
    Z,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::S, Block::A, Block::Z];

    pub fn name(self) -> &'static str {
        match self {
            Block::S => "s",
            Block::A => "a",
            Block::Z => "z",
        }
    }
}

/// A diagonal Gaussian law for one conditioning value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianEntry {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianEntry {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let e = Self { mean, var };
        e.validate()?;
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Zero variance is accepted as the degenerate point-mass limit.
    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.var.len() {
            return Err(validation!("mean and variance lengths differ"));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(validation!("non-finite mean"));
        }
        if self.var.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(validation!("variance must be finite and non-negative"));
        }
        Ok(())
    }

    /// Natural parameters as a `k x q` matrix: row 0 is `mu / sigma^2`,
    /// row 1 is `-1 / (2 sigma^2)`.
    pub fn natural(&self) -> Result<Tensor> {
        self.validate()?;
        if self.var.iter().any(|&v| v <= 0.0) {
            return Err(validation!("natural parameters need strictly positive variance"));
        }
        let q = self.dim();
        let mut t = Tensor::zeros(&[STAT_ORDER, q]);
        for j in 0..q {
            t.data_mut()[j] = self.mean[j] / self.var[j];
            t.data_mut()[q + j] = -0.5 / self.var[j];
        }
        Ok(t)
    }

    pub fn from_natural(eta: &Tensor) -> Result<Self> {
        let (k, q) = eta.dims2();
        if k != STAT_ORDER {
            return Err(validation!("expected {STAT_ORDER} natural-parameter rows, got {k}"));
        }
        let mut mean = Vec::with_capacity(q);
        let mut var = Vec::with_capacity(q);
        for j in 0..q {
            let (e1, e2) = (eta.at2(0, j), eta.at2(1, j));
            if !e1.is_finite() || !e2.is_finite() || e2 >= 0.0 {
                return Err(validation!(
                    "second natural parameter must be finite and negative, got {e2}"
                ));
            }
            let v = -0.5 / e2;
            var.push(v);
            mean.push(e1 * v);
        }
        Ok(Self { mean, var })
    }
}

/// Conditional latent laws: `s | y`, `a | y` and `z | d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeSpec {
    pub q_s: usize,
    pub q_a: usize,
    pub q_z: usize,
    /// Indexed by class.
    pub s: Vec<GaussianEntry>,
    /// Indexed by class.
    pub a: Vec<GaussianEntry>,
    /// Indexed by domain.
    pub z: Vec<GaussianEntry>,
}

/// One draw of every latent block, row-aligned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentTriple {
    pub s: Tensor,
    pub a: Tensor,
    pub z: Tensor,
}

impl LatentTriple {
    pub fn rows(&self) -> usize {
        self.s.dims2().0
    }

    pub fn block(&self, b: Block) -> &Tensor {
        match b {
            Block::S => &self.s,
            Block::A => &self.a,
            Block::Z => &self.z,
        }
    }

    /// `[z, s, a]` column order, matching the mixing input.
    pub fn stacked(&self) -> Tensor {
        Tensor::concat_cols(&[&self.z, &self.s, &self.a])
    }
}

impl GenerativeSpec {
    pub fn classes(&self) -> usize {
        self.s.len()
    }

    pub fn domains(&self) -> usize {
        self.z.len()
    }

    pub fn entries(&self, b: Block) -> &[GaussianEntry] {
        match b {
            Block::S => &self.s,
            Block::A => &self.a,
            Block::Z => &self.z,
        }
    }

    pub fn dim(&self, b: Block) -> usize {
        match b {
            Block::S => self.q_s,
            Block::A => self.q_a,
            Block::Z => self.q_z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s.len() != self.a.len() {
            return Err(config_err!("s and a need one entry per class"));
        }
        for b in Block::ALL {
            for e in self.entries(b) {
                e.validate()?;
                if e.dim() != self.dim(b) {
                    return Err(config_err!("{} entry has dim {} instead of {}", b.name(), e.dim(), self.dim(b)));
                }
            }
        }
        Ok(())
    }

    fn entry(&self, b: Block, index: usize) -> Result<&GaussianEntry> {
        self.entries(b).get(index).ok_or_else(|| {
            config_err!("no {} entry for conditioning value {index}", b.name())
        })
    }
}

fn draw<R: Rng>(e: &GaussianEntry, n: usize, rng: &mut R) -> Tensor {
    let q = e.dim();
    let mut t = Tensor::zeros(&[n, q]);
    for r in 0..n {
        for j in 0..q {
            let eps: f64 = StandardNormal.sample(rng);
            t.data_mut()[r * q + j] = e.mean[j] + libm::sqrt(e.var[j]) * eps;
        }
    }
    t
}

/// `n` i.i.d. draws of `(s, a) | y` and `z | d`.
pub fn sample_latents<R: Rng>(
    spec: &GenerativeSpec,
    y: usize,
    d: usize,
    n: usize,
    rng: &mut R,
) -> Result<LatentTriple> {
    let es = spec.entry(Block::S, y)?;
    let ea = spec.entry(Block::A, y)?;
    let ez = spec.entry(Block::Z, d)?;
    for e in [es, ea, ez] {
        e.validate()?;
    }
    Ok(LatentTriple { s: draw(es, n, rng), a: draw(ea, n, rng), z: draw(ez, n, rng) })
}

/// Gaussian sufficient statistics `[u, u^2]` of an `[n, q]` block.
pub fn sufficient_statistics(u: &Tensor) -> Tensor {
    let sq = u.map(|v| v * v);
    Tensor::concat_cols(&[u, &sq])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankVerdict {
    pub label: alloc::string::String,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub full_column_rank: bool,
}

/// Relative singular-value cutoff used for numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Numerical rank and singular values of a dense matrix.
pub fn matrix_rank(m: &Tensor) -> (usize, Vec<f64>) {
    let (r, c) = m.dims2();
    if r == 0 || c == 0 {
        return (0, Vec::new());
    }
    let mat = DMatrix::from_row_slice(r, c, m.data());
    let mut sv: Vec<f64> = mat.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_TOLERANCE * top.max(1e-300) && s > 0.0).count();
    (rank, sv)
}

/// Stacked differences `Gamma_l - Gamma_0` over conditioning values
/// `1..len`, each flattened to a row of length `q * k`.
pub fn difference_matrix(entries: &[&[GaussianEntry]]) -> Result<Tensor> {
    let count = entries.first().map_or(0, |e| e.len());
    if entries.iter().any(|e| e.len() != count) {
        return Err(validation!("blocks disagree on the number of conditioning values"));
    }
    let flat = |l: usize| -> Result<Vec<f64>> {
        let mut row = Vec::new();
        for e in entries {
            row.extend(e[l].natural()?.transpose().into_data());
        }
        Ok(row)
    };
    if count == 0 {
        return Ok(Tensor::zeros(&[0, 0]));
    }
    let base = flat(0)?;
    let mut rows = Vec::new();
    for l in 1..count {
        let r = flat(l)?;
        rows.push(r.iter().zip(&base).map(|(a, b)| a - b).collect());
    }
    if rows.is_empty() {
        return Ok(Tensor::zeros(&[0, base.len()]));
    }
    Ok(Tensor::from_rows(&rows))
}

fn verdict(label: &str, entries: &[&[GaussianEntry]]) -> Result<RankVerdict> {
    let m = difference_matrix(entries)?;
    let (rows, cols) = m.dims2();
    let (rank, singular_values) = matrix_rank(&m);
    Ok(RankVerdict {
        label: label.into(),
        rows,
        cols,
        rank,
        singular_values,
        full_column_rank: cols > 0 && rank == cols,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub s: RankVerdict,
    pub a: RankVerdict,
    /// `s` and `a` stacked as one block.
    pub sa: RankVerdict,
    pub z: RankVerdict,
}

impl RankReport {
    pub fn all_blocks_pass(&self) -> bool {
        self.s.full_column_rank && self.a.full_column_rank && self.z.full_column_rank
    }
}

/// Full-column-rank checks on the natural-parameter differences across
/// the first `domains` domains and `classes` classes.
pub fn verify_rank_conditions(spec: &GenerativeSpec, domains: usize, classes: usize) -> Result<RankReport> {
    if domains < 2 || classes < 2 {
        return Err(validation!("rank conditions need at least two domains and two classes"));
    }
    if domains > spec.domains() || classes > spec.classes() {
        return Err(config_err!("spec has {} domains and {} classes", spec.domains(), spec.classes()));
    }
    let s = &spec.s[..classes];
    let a = &spec.a[..classes];
    let z = &spec.z[..domains];
    Ok(RankReport {
        s: verdict("s", &[s])?,
        a: verdict("a", &[a])?,
        sa: verdict("s,a", &[s, a])?,
        z: verdict("z", &[z])?,
    })
}
