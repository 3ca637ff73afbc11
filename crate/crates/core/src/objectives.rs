//! Loss terms of the per-domain objective, the cross-domain variance
//! regularizer and the total training objective.
//!
//! Every term is a batch mean (divided by the number of samples in the
//! domain batch). Graph versions are used for training; the `*_value`
//! helpers evaluate the same graph code on plain tensors.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoders::GaussianPosterior;
use crate::error::{validation, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Diagonal Gaussian as graph nodes: `[n, q]` mean and log-variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posterior {
    pub mean: Var,
    pub log_var: Var,
}

impl Posterior {
    pub fn value(&self, g: &Graph) -> GaussianPosterior {
        GaussianPosterior { mean: g.value(self.mean).clone(), log_var: g.value(self.log_var).clone() }
    }

    pub fn constant(g: &mut Graph, p: &GaussianPosterior) -> Self {
        Self { mean: g.constant(p.mean.clone()), log_var: g.constant(p.log_var.clone()) }
    }
}

fn rows(g: &Graph, v: Var) -> f64 {
    g.shape(v).first().copied().unwrap_or(1).max(1) as f64
}

/// Closed-form `KL(q || p)` for diagonal Gaussians, summed over latent
/// coordinates and averaged over the batch.
pub fn kl_gaussian(g: &mut Graph, q: Posterior, p: Posterior) -> Var {
    let n = rows(g, q.mean);
    let diff = g.sub(q.mean, p.mean);
    let diff2 = g.square(diff);
    let var_q = g.exp(q.log_var);
    let num = g.add(var_q, diff2);
    let neg_lvp = g.neg(p.log_var);
    let inv_var_p = g.exp(neg_lvp);
    let ratio = g.mul(num, inv_var_p);
    let log_ratio = g.sub(p.log_var, q.log_var);
    let t = g.add(log_ratio, ratio);
    let t = g.offset(t, -1.0);
    let s = g.sum(t);
    g.scale(s, 0.5 / n)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecMode {
    /// Squared error summed over every element of a sample.
    #[default]
    Sum,
    /// Squared error averaged over the elements of a sample.
    PerElementMean,
}

pub fn loss_rec(g: &mut Graph, x: Var, x_hat: Var, mode: RecMode) -> Var {
    let n = rows(g, x);
    let per_sample = g.value(x).len() as f64 / n;
    let diff = g.sub(x, x_hat);
    let sq = g.square(diff);
    let s = g.sum(sq);
    match mode {
        RecMode::Sum => g.scale(s, 1.0 / n),
        RecMode::PerElementMean => g.scale(s, 1.0 / (n * per_sample)),
    }
}

/// Binary cross-entropy summed over columns, averaged over rows.
/// `targets` is a `[n, c]` tensor of values in `[0, 1]`.
pub fn loss_bce(g: &mut Graph, targets: Var, probs: Var) -> Var {
    let n = rows(g, probs);
    let p = g.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let log_p = g.ln(p);
    let neg_p = g.neg(p);
    let one_minus_p = g.offset(neg_p, 1.0);
    let log_q = g.ln(one_minus_p);
    let complement = g.value(targets).map(|t| 1.0 - t);
    let complement = g.constant(complement);
    let a = g.mul(targets, log_p);
    let b = g.mul(complement, log_q);
    let ll = g.add(a, b);
    let s = g.sum(ll);
    g.scale(s, -1.0 / n)
}

/// Attribute reconstruction loss over `[n, C]` scores.
pub fn loss_gcn(g: &mut Graph, targets: Var, probs: Var) -> Var {
    loss_bce(g, targets, probs)
}

/// Benign/malignant loss; identical contract to [`loss_gcn`] with one column
/// (or one column per class for one-vs-rest multi-class heads).
pub fn loss_cls(g: &mut Graph, targets: Var, probs: Var) -> Var {
    loss_bce(g, targets, probs)
}

/// Gaussian negative log-likelihood (up to constants) for continuous
/// attributes: squared error summed over attributes, averaged over rows.
pub fn loss_attribute_regression(g: &mut Graph, targets: Var, predicted: Var) -> Var {
    loss_rec(g, targets, predicted, RecMode::Sum)
}

/// Population variance (divide by count) of scalar nodes.
pub fn population_variance(g: &mut Graph, xs: &[Var]) -> Var {
    let v = g.stack(xs);
    let mean = g.mean(v);
    let mean_b = g.broadcast(mean, &[xs.len()]);
    let d = g.sub(v, mean_b);
    let d2 = g.square(d);
    g.mean(d2)
}

/// `Var_d(gcn) + Var_d(cls)` across training domains.
pub fn variance_regularizer(g: &mut Graph, gcn: &[Var], cls: &[Var]) -> Result<Var> {
    if gcn.len() < 2 || cls.len() < 2 {
        return Err(validation!(
            "variance regularizer needs at least two domains, got {} / {}",
            gcn.len(),
            cls.len()
        ));
    }
    if gcn.len() != cls.len() {
        return Err(validation!("gcn and cls losses cover different domain counts"));
    }
    let a = population_variance(g, gcn);
    let b = population_variance(g, cls);
    Ok(g.add(a, b))
}

/// Per-term multipliers on the per-domain loss. The unweighted sum
/// (all ones) is the default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub kl: f64,
    pub rec: f64,
    pub gcn: f64,
    pub cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { kl: 1.0, rec: 1.0, gcn: 1.0, cls: 1.0 }
    }
}

/// The four per-domain loss nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DomainTerms {
    pub kl: Var,
    pub rec: Var,
    pub gcn: Var,
    pub cls: Var,
}

impl DomainTerms {
    pub fn combined(&self, g: &mut Graph, w: &LossWeights) -> Var {
        let kl = g.scale(self.kl, w.kl);
        let rec = g.scale(self.rec, w.rec);
        let gcn = g.scale(self.gcn, w.gcn);
        let cls = g.scale(self.cls, w.cls);
        let a = g.add(kl, rec);
        let b = g.add(gcn, cls);
        g.add(a, b)
    }

    pub fn breakdown(&self, g: &Graph, samples: usize) -> DomainLossBreakdown {
        DomainLossBreakdown {
            kl: g.value(self.kl).item(),
            rec: g.value(self.rec).item(),
            gcn: g.value(self.gcn).item(),
            cls: g.value(self.cls).item(),
            samples,
        }
    }
}

/// `sum_d L^d + beta * L_var`; with a single domain the regularizer is
/// absent.
pub fn total_loss(
    g: &mut Graph,
    terms: &[DomainTerms],
    beta: f64,
    weights: &LossWeights,
) -> Result<Var> {
    if terms.is_empty() {
        return Err(validation!("total loss needs at least one domain"));
    }
    let per_domain: Vec<Var> = terms.iter().map(|t| t.combined(g, weights)).collect();
    let stacked = g.stack(&per_domain);
    let sum = g.sum(stacked);
    if terms.len() < 2 {
        return Ok(sum);
    }
    let gcn: Vec<Var> = terms.iter().map(|t| t.gcn).collect();
    let cls: Vec<Var> = terms.iter().map(|t| t.cls).collect();
    let var = variance_regularizer(g, &gcn, &cls)?;
    let var = g.scale(var, beta);
    Ok(g.add(sum, var))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainLossBreakdown {
    pub kl: f64,
    pub rec: f64,
    pub gcn: f64,
    pub cls: f64,
    pub samples: usize,
}

impl DomainLossBreakdown {
    pub fn total(&self) -> f64 {
        self.kl + self.rec + self.gcn + self.cls
    }

    pub fn is_finite(&self) -> bool {
        self.kl.is_finite() && self.rec.is_finite() && self.gcn.is_finite() && self.cls.is_finite()
    }
}

fn scalar_nodes(g: &mut Graph, xs: &[f64]) -> Vec<Var> {
    xs.iter().map(|&x| g.constant(Tensor::scalar(x))).collect()
}

pub fn variance_regularizer_value(gcn: &[f64], cls: &[f64]) -> Result<f64> {
    let mut g = Graph::new();
    let a = scalar_nodes(&mut g, gcn);
    let b = scalar_nodes(&mut g, cls);
    let v = variance_regularizer(&mut g, &a, &b)?;
    Ok(g.value(v).item())
}

pub fn total_loss_value(breakdowns: &[DomainLossBreakdown], beta: f64) -> Result<f64> {
    let mut g = Graph::new();
    let terms: Vec<DomainTerms> = breakdowns
        .iter()
        .map(|b| {
            let v = scalar_nodes(&mut g, &[b.kl, b.rec, b.gcn, b.cls]);
            DomainTerms { kl: v[0], rec: v[1], gcn: v[2], cls: v[3] }
        })
        .collect();
    let t = total_loss(&mut g, &terms, beta, &LossWeights::default())?;
    Ok(g.value(t).item())
}

pub fn kl_divergence(q: &GaussianPosterior, p: &GaussianPosterior) -> f64 {
    let mut g = Graph::new();
    let qv = Posterior::constant(&mut g, q);
    let pv = Posterior::constant(&mut g, p);
    let kl = kl_gaussian(&mut g, qv, pv);
    g.value(kl).item()
}

pub fn bce_value(targets: &Tensor, probs: &Tensor) -> f64 {
    let mut g = Graph::new();
    let t = g.constant(targets.clone());
    let p = g.constant(probs.clone());
    let l = loss_bce(&mut g, t, p);
    g.value(l).item()
}

pub fn rec_value(x: &Tensor, x_hat: &Tensor, mode: RecMode) -> f64 {
    let mut g = Graph::new();
    let a = g.constant(x.clone());
    let b = g.constant(x_hat.clone());
    let l = loss_rec(&mut g, a, b, mode);
    g.value(l).item()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn gauss(mean: &[f64], log_var: &[f64]) -> GaussianPosterior {
        GaussianPosterior {
            mean: Tensor::new(&[1, mean.len()], mean.to_vec()),
            log_var: Tensor::new(&[1, log_var.len()], log_var.to_vec()),
        }
    }

    #[test]
    fn kl_of_identical_is_zero() {
        let q = gauss(&[0.3, -1.2], &[0.5, -0.1]);
        assert!(kl_divergence(&q, &q).abs() < 1e-15);
    }

    #[test]
    fn kl_closed_form_cases() {
        let std = gauss(&[0.0], &[0.0]);
        assert!((kl_divergence(&gauss(&[1.0], &[0.0]), &std) - 0.5).abs() < 1e-12);
        let wide = gauss(&[0.0], &[libm::log(4.0)]);
        let expected = 0.5 * (4.0 - 1.0 - libm::log(4.0));
        assert!((kl_divergence(&wide, &std) - expected).abs() < 1e-12);
        assert!((expected - 0.8069).abs() < 1e-4);
    }

    #[test]
    fn bce_half_is_ln2() {
        let t = Tensor::new(&[1, 1], vec![1.0]);
        let p = Tensor::new(&[1, 1], vec![0.5]);
        assert!((bce_value(&t, &p) - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let t = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        assert!(bce_value(&t, &t) < 1e-6);
    }

    #[test]
    fn rec_offset_by_one() {
        let x = Tensor::new(&[2, 3], vec![0.5; 6]);
        let xh = x.map(|v| v + 1.0);
        assert!((rec_value(&x, &xh, RecMode::Sum) - 3.0).abs() < 1e-12);
        assert!((rec_value(&x, &xh, RecMode::PerElementMean) - 1.0).abs() < 1e-12);
        assert_eq!(rec_value(&x, &x, RecMode::Sum), 0.0);
    }

    #[test]
    fn variance_regularizer_examples() {
        assert_eq!(variance_regularizer_value(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert!(variance_regularizer_value(&[0.7, 0.7, 0.7], &[0.2, 0.2, 0.2]).unwrap() < 1e-24);
        assert!(variance_regularizer_value(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn total_loss_beta_zero_is_plain_sum() {
        let b = [
            DomainLossBreakdown { kl: 1.0, rec: 2.0, gcn: 0.5, cls: 0.1, samples: 4 },
            DomainLossBreakdown { kl: 0.5, rec: 1.0, gcn: 1.5, cls: 0.3, samples: 4 },
        ];
        let plain: f64 = b.iter().map(DomainLossBreakdown::total).sum();
        assert!((total_loss_value(&b, 0.0).unwrap() - plain).abs() < 1e-12);
        let var = variance_regularizer_value(&[0.5, 1.5], &[0.1, 0.3]).unwrap();
        assert!((total_loss_value(&b, 1.0).unwrap() - (plain + var)).abs() < 1e-12);
    }
}
