//! Affine-recovery scores of learned latents against ground truth.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::model::DimGcn;
use crate::synth::{affine_fit_score, Block, LatentTriple, RankReport, SyntheticDomain};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementReport {
    /// Block scores in `s, a, z` order.
    pub block_r2: [f64; 3],
    /// `leakage[i][j]`: recovered block `i` regressed on the true statistics
    /// of block `j`. The diagonal repeats the block scores.
    pub leakage: [[f64; 3]; 3],
    pub samples: usize,
    pub rank: Option<RankReport>,
}

impl DisentanglementReport {
    pub fn block(&self, b: Block) -> f64 {
        self.block_r2[b as usize]
    }

    /// Largest off-diagonal entry in row `b`.
    pub fn max_leakage(&self, b: Block) -> f64 {
        let i = b as usize;
        (0..3).filter(|&j| j != i).map(|j| self.leakage[i][j]).fold(0.0, f64::max)
    }

    /// Every block at least `min_r2`, every leakage at most `margin` below
    /// its block score.
    pub fn passes(&self, min_r2: f64, margin: f64) -> bool {
        Block::ALL.iter().all(|&b| self.block(b) >= min_r2 && self.max_leakage(b) <= self.block(b) - margin)
    }
}

/// Scores recovered latents against the true blocks.
pub fn score_latents(recovered: &LatentTriple, truth: &LatentTriple) -> Result<DisentanglementReport> {
    let n = truth.rows();
    if recovered.rows() != n {
        return Err(validation!("{} recovered rows for {n} true rows", recovered.rows()));
    }
    let mut leakage = [[0.0; 3]; 3];
    for (i, &bi) in Block::ALL.iter().enumerate() {
        for (j, &bj) in Block::ALL.iter().enumerate() {
            leakage[i][j] = affine_fit_score(truth.block(bj), recovered.block(bi))?.r2;
        }
    }
    let block_r2 = [leakage[0][0], leakage[1][1], leakage[2][2]];
    Ok(DisentanglementReport { block_r2, leakage, samples: n, rank: None })
}

fn stack(parts: &[&Tensor]) -> Tensor {
    let q = parts[0].dims2().1;
    let n: usize = parts.iter().map(|p| p.dims2().0).sum();
    Tensor::new(&[n, q], parts.iter().flat_map(|p| p.data().iter().copied()).collect())
}

/// Encodes every training-domain set with both branches (posterior means;
/// `z` through its own domain's layers) and scores the recovery.
pub fn disentangle_report(model: &DimGcn, domains: &[&SyntheticDomain]) -> Result<DisentanglementReport> {
    if domains.is_empty() {
        return Err(validation!("no domains to score"));
    }
    let mut rec_s = Vec::new();
    let mut rec_a = Vec::new();
    let mut rec_z = Vec::new();
    for d in domains {
        if d.held_out || d.domain >= model.domains() {
            return Err(validation!("domain {} has no irrelevant encoder", d.domain));
        }
        let e = model.encode(&d.x, Some(d.domain))?;
        rec_s.push(e.s.mean);
        rec_a.push(e.a.mean);
        rec_z.push(e.z.expect("training domain yields z").mean);
    }
    let refs = |v: &Vec<Tensor>| -> Tensor { stack(&v.iter().collect::<Vec<_>>()) };
    let recovered = LatentTriple { s: refs(&rec_s), a: refs(&rec_a), z: refs(&rec_z) };
    let truth = LatentTriple {
        s: stack(&domains.iter().map(|d| &d.latents.s).collect::<Vec<_>>()),
        a: stack(&domains.iter().map(|d| &d.latents.a).collect::<Vec<_>>()),
        z: stack(&domains.iter().map(|d| &d.latents.z).collect::<Vec<_>>()),
    };
    score_latents(&recovered, &truth)
}
