//! Estimation quality: relative squared error of `(mu, A)` and support-recovery AUC.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::Theta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rel_l2_error: f64,
    pub auc: f64,
    pub support_size_true: usize,
    pub support_size_est_at_threshold: usize,
}

/// `||theta_hat - theta||^2 / ||theta||^2` over the concatenation of `mu` and `vec(A)`.
pub fn relative_error(theta_hat: &Theta, theta_true: &Theta) -> Result<f64> {
    if theta_hat.mu.len() != theta_true.mu.len() || theta_hat.a.shape() != theta_true.a.shape() {
        return Err(Error::Dimension("estimate and truth differ in shape".into()));
    }
    let denom = theta_true.mu.norm_squared() + theta_true.a.norm_squared();
    if denom == 0.0 {
        return Err(Error::InvalidParams("true parameter is zero".into()));
    }
    let num = (&theta_hat.mu - &theta_true.mu).norm_squared() + (&theta_hat.a - &theta_true.a).norm_squared();
    Ok(num / denom)
}

/// Entries mapped affinely onto `[0, 1]`; a constant matrix maps to zeros.
pub fn min_max_scale(a: &DMatrix<f64>) -> DMatrix<f64> {
    let lo = a.min();
    let hi = a.max();
    if hi > lo {
        a.map(|v| (v - lo) / (hi - lo))
    } else {
        DMatrix::zeros(a.nrows(), a.ncols())
    }
}

/// Mann-Whitney AUC of the scaled entries of `a_hat` against the true support.
/// Ties count 1/2.
pub fn auc_score(a_hat: &DMatrix<f64>, support: &DMatrix<bool>) -> Result<f64> {
    if a_hat.shape() != support.shape() {
        return Err(Error::Dimension("estimate and support differ in shape".into()));
    }
    if a_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    let n_pos = support.iter().filter(|b| **b).count();
    let n_neg = support.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidParams("support must contain both edges and non-edges".into()));
    }
    let scores = min_max_scale(a_hat);
    let mut order: Vec<(f64, bool)> = scores.iter().copied().zip(support.iter().copied()).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].0 == order[i].0 {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        let pos = order[i..j].iter().filter(|e| e.1).count();
        rank_sum += mid * pos as f64;
        i = j;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// ROC points `(false positive rate, true positive rate)` over decreasing thresholds.
pub fn roc_curve(a_hat: &DMatrix<f64>, support: &DMatrix<bool>) -> Result<Vec<(f64, f64)>> {
    auc_score(a_hat, support)?;
    let scores = min_max_scale(a_hat);
    let mut order: Vec<(f64, bool)> = scores.iter().copied().zip(support.iter().copied()).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_pos = order.iter().filter(|e| e.1).count() as f64;
    let n_neg = order.len() as f64 - n_pos;
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut points = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].0 == order[i].0 {
            if order[j].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        points.push((fp / n_neg, tp / n_pos));
        i = j;
    }
    Ok(points)
}

/// Error, AUC and support sizes; estimated support counts entries `> threshold`.
pub fn evaluate(theta_hat: &Theta, theta_true: &Theta, threshold: f64) -> Result<EvalReport> {
    let support = theta_true.a.map(|v| v > 0.0);
    Ok(EvalReport {
        rel_l2_error: relative_error(theta_hat, theta_true)?,
        auc: auc_score(&theta_hat.a, &support)?,
        support_size_true: support.iter().filter(|b| **b).count(),
        support_size_est_at_threshold: theta_hat.a.iter().filter(|v| **v > threshold).count(),
    })
}
