//! Ranking and attribute metrics.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::tensor::Tensor;

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn evaluate_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(validation!("{} scores for {} labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(validation!("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(validation!("AUC needs both classes ({pos} positive, {neg} negative)"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // Sum of midranks over positives; ties share the average rank. Twice the
    // rank keeps everything in exact integer arithmetic.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        let p = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_mid * p;
        i = j + 1;
    }
    let (pos, neg) = (pos as u128, neg as u128);
    // 2 * U = 2 * R_pos - pos * (pos + 1)
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// One-vs-rest AUC averaged over classes. A single score column is treated
/// as the positive-class probability of a binary task.
pub fn macro_auc(scores: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, k) = scores.dims2();
    if n != labels.len() {
        return Err(validation!("{n} score rows for {} labels", labels.len()));
    }
    if k == 1 {
        let col: Vec<f64> = scores.data().to_vec();
        let l: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        return evaluate_auc(&col, &l);
    }
    let mut total = 0.0;
    for c in 0..k {
        let col: Vec<f64> = (0..n).map(|r| scores.at2(r, c)).collect();
        let l: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        total += evaluate_auc(&col, &l)?;
    }
    Ok(total / k as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeAccuracy {
    pub per_attribute: Vec<f64>,
    /// Fraction of all (sample, attribute) slots predicted correctly.
    pub overall: f64,
}

/// Thresholded accuracy of `predicted` probabilities against binary
/// `targets`, column by column.
pub fn evaluate_attributes(predicted: &Tensor, targets: &Tensor, threshold: f64) -> Result<AttributeAccuracy> {
    if predicted.shape() != targets.shape() || predicted.rank() != 2 {
        return Err(validation!(
            "prediction shape {:?} does not match targets {:?}",
            predicted.shape(),
            targets.shape()
        ));
    }
    let (n, c) = predicted.dims2();
    if n == 0 {
        return Err(validation!("attribute accuracy needs at least one sample"));
    }
    let mut correct = vec![0usize; c];
    for r in 0..n {
        for k in 0..c {
            let p = predicted.at2(r, k) >= threshold;
            let t = targets.at2(r, k) >= 0.5;
            if p == t {
                correct[k] += 1;
            }
        }
    }
    let total: usize = correct.iter().sum();
    Ok(AttributeAccuracy {
        per_attribute: correct.iter().map(|&k| k as f64 / n as f64).collect(),
        overall: total as f64 / (n * c) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(evaluate_auc(&[0.9, 0.2, 0.7], &[true, false, true]).unwrap(), 1.0);
        assert_eq!(evaluate_auc(&[0.3; 4], &[true, false, true, false]).unwrap(), 0.5);
        let s = [0.1, 0.4, 0.35, 0.8];
        let l = [false, false, true, true];
        let inv: Vec<bool> = l.iter().map(|b| !b).collect();
        let a = evaluate_auc(&s, &l).unwrap();
        assert!((evaluate_auc(&s, &inv).unwrap() - (1.0 - a)).abs() < 1e-15);
        assert_eq!(a, 0.75);
        assert!(evaluate_auc(&[0.1], &[true]).is_err());
    }

    #[test]
    fn attribute_accuracy_counts() {
        let t = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(evaluate_attributes(&t, &t, 0.5).unwrap().overall, 1.0);
        let half = Tensor::full(&[2, 2], 0.49);
        let acc = evaluate_attributes(&half, &t, 0.5).unwrap();
        assert_eq!(acc.overall, 0.75);
        assert_eq!(acc.per_attribute, vec![0.5, 1.0]);
    }
}
