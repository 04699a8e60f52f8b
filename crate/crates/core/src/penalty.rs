//! Weighted l1 and trace-norm penalties and their proximal operators.
//!
//! The l1 prox folds in the nonnegativity constraint (one-sided
//! soft-threshold). The trace-norm prox does not: its output may have
//! negative entries. `prox_trace_nonneg` solves the joint problem
//! iteratively.

use nalgebra::allocator::Allocator;
use nalgebra::{DMatrix, DVector, DefaultAllocator, Dim, Matrix, OMatrix, Storage};

use crate::error::{Error, Result};
use crate::model::robust_svd;
use crate::features::PenaltyWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub weights: PenaltyWeights,
    pub use_l1_mu: bool,
    pub use_l1_a: bool,
    pub use_trace: bool,
}

impl PenaltySpec {
    /// No penalty; only the nonnegativity constraint remains.
    pub fn none(d: usize) -> Self {
        Self { weights: PenaltyWeights::zeros(d), use_l1_mu: false, use_l1_a: false, use_trace: false }
    }

    pub fn l1(weights: PenaltyWeights) -> Self {
        Self { weights, use_l1_mu: true, use_l1_a: true, use_trace: false }
    }

    pub fn l1_trace(weights: PenaltyWeights) -> Self {
        Self { weights, use_l1_mu: true, use_l1_a: true, use_trace: true }
    }

    pub fn dim(&self) -> usize {
        self.weights.w.len()
    }

    pub fn tau(&self) -> f64 {
        if self.use_trace {
            self.weights.tau
        } else {
            0.0
        }
    }

    /// l1 weights on `mu` actually in force.
    pub fn mu_weights(&self) -> DVector<f64> {
        if self.use_l1_mu {
            self.weights.w.clone()
        } else {
            DVector::zeros(self.dim())
        }
    }

    pub fn a_weights(&self) -> DMatrix<f64> {
        if self.use_l1_a {
            self.weights.big_w.clone()
        } else {
            DMatrix::zeros(self.dim(), self.dim())
        }
    }

    /// True when `A` carries a nonzero l1 term.
    pub fn has_l1_a(&self) -> bool {
        self.use_l1_a && self.weights.big_w.iter().any(|w| *w > 0.0)
    }

    pub fn has_trace(&self) -> bool {
        self.tau() > 0.0
    }
}

pub fn nuclear_norm(a: &DMatrix<f64>) -> f64 {
    if a.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    robust_svd(a, false).map(|svd| svd.singular_values.sum()).unwrap_or(f64::NAN)
}

/// `sum w_j |mu_j| + sum W_{j,k} |a_{j,k}| + tau ||A||_*` over enabled terms.
pub fn pen_value(mu: &DVector<f64>, a: &DMatrix<f64>, spec: &PenaltySpec) -> Result<f64> {
    let d = spec.dim();
    if mu.len() != d || a.shape() != (d, d) || spec.weights.big_w.shape() != (d, d) {
        return Err(Error::Dimension("penalty weights do not match theta".into()));
    }
    let mut total = 0.0;
    if spec.use_l1_mu {
        total += spec.weights.w.iter().zip(mu.iter()).map(|(w, m)| w * m.abs()).sum::<f64>();
    }
    if spec.use_l1_a {
        total += spec.weights.big_w.iter().zip(a.iter()).map(|(w, v)| w * v.abs()).sum::<f64>();
    }
    if spec.use_trace && spec.weights.tau != 0.0 {
        total += spec.weights.tau * nuclear_norm(a);
    }
    Ok(total)
}

/// Entrywise `max(v - step * w, 0)`.
pub fn prox_l1_nonneg<R, C, S1, S2>(v: &Matrix<f64, R, C, S1>, weights: &Matrix<f64, R, C, S2>, step: f64) -> Result<OMatrix<f64, R, C>>
where
    R: Dim,
    C: Dim,
    S1: Storage<f64, R, C>,
    S2: Storage<f64, R, C>,
    DefaultAllocator: Allocator<R, C>,
{
    if v.shape() != weights.shape() {
        return Err(Error::Dimension(format!("prox input {:?} vs weights {:?}", v.shape(), weights.shape())));
    }
    if !(step > 0.0) {
        return Err(Error::Config(format!("prox step must be > 0, got {step}")));
    }
    Ok(v.zip_map(weights, |x, w| (x - step * w).max(0.0)))
}

/// Singular-value soft-thresholding `U max(S - tau_step, 0) V^T`.
pub fn prox_trace(v: &DMatrix<f64>, tau_step: f64) -> Result<DMatrix<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite input to trace-norm prox".into()));
    }
    if tau_step < 0.0 {
        return Err(Error::Config("trace-norm threshold must be >= 0".into()));
    }
    if tau_step == 0.0 || v.iter().all(|x| *x == 0.0) {
        return Ok(v.clone());
    }
    let svd = robust_svd(v, true)?;
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?;
    let shrunk = svd.singular_values.map(|s| (s - tau_step).max(0.0));
    Ok(u * DMatrix::from_diagonal(&shrunk) * vt)
}

/// Moreau envelope of `tau ||.||_*` with parameter `beta`, and its gradient.
pub fn smoothed_trace(v: &DMatrix<f64>, tau: f64, beta: f64) -> Result<(f64, DMatrix<f64>)> {
    let p = prox_trace(v, tau * beta)?;
    let diff = v - &p;
    let value = tau * nuclear_norm(&p) + diff.norm_squared() / (2.0 * beta);
    Ok((value, diff / beta))
}

/// Prox of `tau_step ||.||_* + indicator(X >= 0)` by Dykstra-like splitting.
pub fn prox_trace_nonneg(v: &DMatrix<f64>, tau_step: f64, tol: f64, max_iter: usize) -> Result<DMatrix<f64>> {
    let mut x = v.clone();
    let mut p = DMatrix::zeros(v.nrows(), v.ncols());
    let mut q = DMatrix::zeros(v.nrows(), v.ncols());
    for _ in 0..max_iter {
        let y = prox_trace(&(&x + &p), tau_step)?;
        p += &x - &y;
        let x_next = (&y + &q).map(|e| e.max(0.0));
        q += &y - &x_next;
        let change = (&x_next - &x).norm();
        x = x_next;
        if change <= tol * (1.0 + x.norm()) {
            break;
        }
    }
    Ok(x)
}

/// Number of singular values above `1e-12 * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.iter().all(|v| *v == 0.0) {
        return 0;
    }
    let Ok(svd) = robust_svd(a, false) else {
        return a.nrows().min(a.ncols());
    };
    let sv = svd.singular_values;
    let max = sv.max();
    sv.iter().filter(|s| **s > 1e-12 * max).count()
}
