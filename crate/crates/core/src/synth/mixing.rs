//! Bijective mixing maps: invertible linear stages, each followed by the
//! strictly monotone pointwise map `u + alpha * tanh(u)`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, validation, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearStage {
    /// Applied as `u W`, rows are samples.
    pub matrix: Tensor,
    pub inverse: Tensor,
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mixing {
    pub dim: usize,
    pub stages: Vec<LinearStage>,
    /// Must exceed -1 for the pointwise map to stay monotone.
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingConfig {
    pub stages: usize,
    pub alpha: f64,
    /// Singular values of each linear stage are drawn uniformly from here.
    pub singular_range: (f64, f64),
    pub condition_bound: f64,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self { stages: 3, alpha: 0.5, singular_range: (0.7, 1.4), condition_bound: 1e3 }
    }
}

fn orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn to_tensor(m: &DMatrix<f64>) -> Tensor {
    let (r, c) = m.shape();
    Tensor::new(&[r, c], (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect())
}

/// `v = u + alpha * tanh(u)`
pub fn pointwise(u: f64, alpha: f64) -> f64 {
    u + alpha * libm::tanh(u)
}

/// Newton inverse of [`pointwise`].
pub fn pointwise_inverse(v: f64, alpha: f64) -> f64 {
    let mut u = v / (1.0 + alpha.max(0.0));
    for _ in 0..100 {
        let t = libm::tanh(u);
        let step = (u + alpha * t - v) / (1.0 + alpha * (1.0 - t * t));
        u -= step;
        if libm::fabs(step) <= 1e-15 * (1.0 + libm::fabs(u)) {
            break;
        }
    }
    u
}

impl Mixing {
    pub fn identity(dim: usize) -> Self {
        Self { dim, stages: Vec::new(), alpha: 0.0 }
    }

    pub fn random<R: Rng>(dim: usize, cfg: &MixingConfig, rng: &mut R) -> Result<Self> {
        let (lo, hi) = cfg.singular_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(config_err!("singular range must be positive and ordered"));
        }
        if hi / lo > cfg.condition_bound {
            return Err(config_err!(
                "singular range {lo}..{hi} exceeds condition bound {}",
                cfg.condition_bound
            ));
        }
        if !(cfg.alpha > -1.0) {
            return Err(config_err!("alpha must exceed -1"));
        }
        let mut stages = Vec::with_capacity(cfg.stages);
        for _ in 0..cfg.stages {
            let u = orthogonal(dim, rng);
            let v = orthogonal(dim, rng);
            let sv: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..=hi)).collect();
            let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sv.clone()));
            let si = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(dim, sv.iter().map(|x| 1.0 / x)));
            let w = &u * &s * v.transpose();
            let wi = &v * &si * u.transpose();
            let max = sv.iter().copied().fold(f64::MIN, f64::max);
            let min = sv.iter().copied().fold(f64::MAX, f64::min);
            let condition = max / min;
            if condition > cfg.condition_bound {
                return Err(validation!("stage condition {condition} above bound"));
            }
            stages.push(LinearStage { matrix: to_tensor(&w), inverse: to_tensor(&wi), condition });
        }
        Ok(Self { dim, stages, alpha: cfg.alpha })
    }

    fn check(&self, u: &Tensor) -> Result<()> {
        if u.rank() != 2 || u.dims2().1 != self.dim {
            return Err(validation!("mixing expects [n, {}] input, got {:?}", self.dim, u.shape()));
        }
        Ok(())
    }

    pub fn forward(&self, u: &Tensor) -> Result<Tensor> {
        self.check(u)?;
        let mut h = u.clone();
        for st in &self.stages {
            h = h.matmul(&st.matrix).map(|v| pointwise(v, self.alpha));
        }
        Ok(h)
    }

    pub fn inverse(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mut h = x.clone();
        for st in self.stages.iter().rev() {
            h = h.map(|v| pointwise_inverse(v, self.alpha)).matmul(&st.inverse);
        }
        Ok(h)
    }
}
