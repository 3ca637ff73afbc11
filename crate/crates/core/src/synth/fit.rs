//! Least-squares affine recovery scores.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::synth::spec::{sufficient_statistics, RANK_TOLERANCE};
use crate::tensor::Tensor;

/// Minimum ratio of samples to regressors (including the intercept).
pub const MIN_SAMPLES_PER_REGRESSOR: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    /// Mean coefficient of determination over target coordinates.
    pub r2: f64,
    pub per_coordinate: Vec<f64>,
    /// `[p, r]` coefficients mapping regressors to targets.
    pub coefficients: Tensor,
    /// `[r]` intercept.
    pub intercept: Vec<f64>,
    /// Regressor matrix (with intercept) lacked full column rank.
    pub degenerate: bool,
}

/// Least-squares fit `targets ~ regressors * M + b`. Coordinates with no
/// variance score zero; every score is clipped into `[0, 1]`.
pub fn affine_fit(regressors: &Tensor, targets: &Tensor) -> Result<AffineFit> {
    let (n, p) = regressors.dims2();
    let (nt, r) = targets.dims2();
    if n != nt {
        return Err(validation!("{n} regressor rows for {nt} target rows"));
    }
    if n < MIN_SAMPLES_PER_REGRESSOR * (p + 1) {
        return Err(validation!(
            "{n} samples is fewer than {MIN_SAMPLES_PER_REGRESSOR}x the {} regressors",
            p + 1
        ));
    }
    // Center both sides; the intercept then follows from the means.
    let mean = |t: &Tensor, c: usize, w: usize| -> Vec<f64> {
        let mut m = alloc::vec![0.0; w];
        for i in 0..n {
            for j in 0..w {
                m[j] += t.data()[i * c + j];
            }
        }
        m.iter_mut().for_each(|v| *v /= n as f64);
        m
    };
    let mx = mean(regressors, p, p);
    let my = mean(targets, r, r);
    let x = DMatrix::from_fn(n, p, |i, j| regressors.at2(i, j) - mx[j]);
    let y = DMatrix::from_fn(n, r, |i, j| targets.at2(i, j) - my[j]);
    // Scale columns so the rank cutoff is unit-free.
    let scales: Vec<f64> = (0..p)
        .map(|j| {
            let s = x.column(j).norm();
            if s > 0.0 { s } else { 1.0 }
        })
        .collect();
    let xs = DMatrix::from_fn(n, p, |i, j| x[(i, j)] / scales[j]);
    let svd = xs.svd(true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = RANK_TOLERANCE * top.max(1e-300);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let degenerate = rank < p;
    let beta_s = svd.solve(&y, eps).map_err(|e| validation!("least squares failed: {e}"))?;
    let beta = DMatrix::from_fn(p, r, |i, j| beta_s[(i, j)] / scales[i]);
    let resid = &y - &x * &beta;
    let mut per_coordinate = Vec::with_capacity(r);
    for j in 0..r {
        let sst: f64 = y.column(j).iter().map(|v| v * v).sum();
        let sse: f64 = resid.column(j).iter().map(|v| v * v).sum();
        let score = if sst > 0.0 { 1.0 - sse / sst } else { 0.0 };
        per_coordinate.push(score.clamp(0.0, 1.0));
    }
    let intercept: Vec<f64> =
        (0..r).map(|j| my[j] - (0..p).map(|i| mx[i] * beta[(i, j)]).sum::<f64>()).collect();
    let coefficients = Tensor::new(&[p, r], (0..p).flat_map(|i| (0..r).map(move |j| (i, j))).map(|(i, j)| beta[(i, j)]).collect());
    let r2 = if r == 0 { 0.0 } else { per_coordinate.iter().sum::<f64>() / r as f64 };
    Ok(AffineFit { r2, per_coordinate, coefficients, intercept, degenerate })
}

/// Regresses `recovered` on the Gaussian sufficient statistics
/// `[u, u^2]` of the true block samples.
pub fn affine_fit_score(truth: &Tensor, recovered: &Tensor) -> Result<AffineFit> {
    affine_fit(&sufficient_statistics(truth), recovered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, q: usize, seed: u64) -> Tensor {
        let mut rng = stream(seed, 1);
        Tensor::new(&[n, q], (0..n * q).map(|_| StandardNormal.sample(&mut rng)).collect())
    }

    #[test]
    fn exact_affine_relation_scores_one() {
        let t = gaussian(200, 2, 1);
        let rec = t.map(|v| 2.0 * v + 1.0);
        let f = affine_fit_score(&t, &rec).unwrap();
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!((f.intercept[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_samples_rejected() {
        let t = gaussian(20, 2, 1);
        assert!(affine_fit_score(&t, &t).is_err());
    }

    #[test]
    fn duplicated_regressor_is_degenerate() {
        let t = gaussian(100, 1, 3);
        let dup = Tensor::concat_cols(&[&t, &t]);
        let f = affine_fit(&dup, &t).unwrap();
        assert!(f.degenerate);
        assert!((f.r2 - 1.0).abs() < 1e-9);
    }
}
