//! Goodness-of-fit terms: the least-squares contrast and the negative
//! log-likelihood, each with its exact gradient.
//!
//! Everything that does not depend on `(mu, A)` is computed once from the
//! events: kernel integrals `(1/T) int H`, Gram blocks `(1/T) int H H^T` and
//! left limits `H(t-)` at events. Per-call cost is then `O(d^3)` for
//! least squares and `O(events * d)` for the likelihood.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::check_decays;
use crate::model::{EventData, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct LossValueGrad {
    pub value: f64,
    pub grad_mu: DVector<f64>,
    pub grad_a: DMatrix<f64>,
}

impl LossValueGrad {
    fn infeasible(d: usize) -> Self {
        Self { value: f64::INFINITY, grad_mu: DVector::zeros(d), grad_a: DMatrix::zeros(d, d) }
    }

    pub fn is_feasible(&self) -> bool {
        self.value.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct PrecomputedGram {
    /// Row `j` holds `psi_j`, `psi_{j,k} = (1/T) int_0^T H_{j,k}`.
    pub psi: DMatrix<f64>,
    /// `G_j[k,k'] = (1/T) int_0^T H_{j,k} H_{j,k'}`.
    pub gram: Vec<DMatrix<f64>>,
    /// Row `j` holds `(1/T) sum_i H_{j,.}(t_{j,i}-)`.
    pub s: DMatrix<f64>,
    pub counts: Vec<usize>,
    pub horizon: f64,
}

impl PrecomputedGram {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }
}

/// `(1/T) int_0^T H_{j,k}` for one receiver, given its decay row.
fn kernel_integrals(data: &EventData, alpha: &[f64]) -> DVector<f64> {
    let horizon = data.horizon();
    DVector::from_iterator(
        alpha.len(),
        data.events().iter().zip(alpha).map(|(times, &a)| {
            times.iter().map(|&t| -(-a * (horizon - t)).exp_m1() / a).sum::<f64>() / horizon
        }),
    )
}

/// `(1/T) int_0^T H_k H_{k'}` for one decay row.
///
/// Each pair is integrated lazily: its running integral is brought up to
/// date only when one of its two coordinates jumps, so a sweep costs
/// `O(events * d)`.
fn gram_block(merged: &[(f64, usize)], alpha: &[f64], horizon: f64) -> DMatrix<f64> {
    let d = alpha.len();
    let mut value = vec![0.0; d];
    let mut last_jump = vec![0.0; d];
    let mut settled = DMatrix::<f64>::zeros(d, d);
    let mut g = DMatrix::<f64>::zeros(d, d);

    let mut settle = |n: usize, k: usize, t: f64, value: &[f64], last_jump: &[f64]| {
        let s = settled[(n, k)];
        if t <= s {
            return;
        }
        settled[(n, k)] = t;
        settled[(k, n)] = t;
        if value[n] == 0.0 || value[k] == 0.0 {
            return;
        }
        let hn = value[n] * (-alpha[n] * (s - last_jump[n])).exp();
        let hk = value[k] * (-alpha[k] * (s - last_jump[k])).exp();
        let rate = alpha[n] + alpha[k];
        let inc = hn * hk * -(-rate * (t - s)).exp_m1() / rate;
        g[(n, k)] += inc;
        if n != k {
            g[(k, n)] += inc;
        }
    };

    for &(t, n) in merged {
        for k in 0..d {
            settle(n, k, t, &value, &last_jump);
        }
        value[n] = value[n] * (-alpha[n] * (t - last_jump[n])).exp() + 1.0;
        last_jump[n] = t;
    }
    for n in 0..d {
        for k in n..d {
            settle(n, k, horizon, &value, &last_jump);
        }
    }
    g / horizon
}

/// Left limits `H_{j,.}(t_{j,i}-)` at every event of `j`, one row per event.
pub(crate) fn left_limits_row(data: &EventData, merged: &[(f64, usize)], alpha: &[f64], j: usize) -> DMatrix<f64> {
    let d = alpha.len();
    let n_j = data.node_events(j).len();
    let mut out = DMatrix::zeros(n_j, d);
    if n_j == 0 {
        return out;
    }
    let mut value = vec![0.0; d];
    let mut last_jump = vec![0.0; d];
    let mut row = 0;
    let mut i = 0;
    while i < merged.len() {
        let t = merged[i].0;
        let mut end = i;
        while end < merged.len() && merged[end].0 == t {
            end += 1;
        }
        if merged[i..end].iter().any(|&(_, n)| n == j) {
            for k in 0..d {
                out[(row, k)] = value[k] * (-alpha[k] * (t - last_jump[k])).exp();
            }
            row += 1;
        }
        for &(_, n) in &merged[i..end] {
            value[n] = value[n] * (-alpha[n] * (t - last_jump[n])).exp() + 1.0;
            last_jump[n] = t;
        }
        i = end;
    }
    out
}

fn decay_row(decays: &DMatrix<f64>, j: usize) -> Vec<f64> {
    decays.row(j).iter().copied().collect()
}

fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// Closed-form kernel integrals, Gram blocks and event sums.
///
/// Receivers sharing the same decay row share one Gram block.
pub fn precompute_gram(data: &EventData, decays: &DMatrix<f64>) -> Result<PrecomputedGram> {
    check_decays(data, decays)?;
    let d = data.dim();
    let horizon = data.horizon();
    let merged = data.merged();
    let rows: Vec<Vec<f64>> = (0..d).map(|j| decay_row(decays, j)).collect();

    let mut unique: Vec<Vec<f64>> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut row_block = Vec::with_capacity(d);
    for row in &rows {
        let next = unique.len();
        let id = *index.entry(row_key(row)).or_insert(next);
        if id == next {
            unique.push(row.clone());
        }
        row_block.push(id);
    }
    let blocks: Vec<DMatrix<f64>> = unique.par_iter().map(|row| gram_block(&merged, row, horizon)).collect();
    let gram = row_block.iter().map(|&id| blocks[id].clone()).collect();

    let per_node: Vec<(DVector<f64>, DVector<f64>)> = (0..d)
        .into_par_iter()
        .map(|j| {
            let psi = kernel_integrals(data, &rows[j]);
            let h = left_limits_row(data, &merged, &rows[j], j);
            let s = DVector::from_iterator(d, h.column_iter().map(|c| c.sum() / horizon));
            (psi, s)
        })
        .collect();
    let mut psi = DMatrix::zeros(d, d);
    let mut s = DMatrix::zeros(d, d);
    for (j, (p, sj)) in per_node.into_iter().enumerate() {
        psi.set_row(j, &p.transpose());
        s.set_row(j, &sj.transpose());
    }
    Ok(PrecomputedGram { psi, gram, s, counts: data.counts(), horizon })
}

fn check_theta(mu: &DVector<f64>, a: &DMatrix<f64>, d: usize) -> Result<()> {
    if mu.len() != d || a.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "theta has mu of length {} and A {:?}, expected d = {d}",
            mu.len(),
            a.shape()
        )));
    }
    Ok(())
}

pub fn least_squares(params: &ModelParams, gram: &PrecomputedGram) -> Result<LossValueGrad> {
    check_theta(params.mu(), params.adjacency(), gram.dim())?;
    Ok(least_squares_at(params.mu(), params.adjacency(), gram))
}

/// Least-squares contrast at an arbitrary (possibly infeasible) point.
pub fn least_squares_at(mu: &DVector<f64>, a: &DMatrix<f64>, gram: &PrecomputedGram) -> LossValueGrad {
    let d = gram.dim();
    let t = gram.horizon;
    let mut value = 0.0;
    let mut grad_mu = DVector::zeros(d);
    let mut grad_a = DMatrix::zeros(d, d);
    for j in 0..d {
        let row = a.row(j).transpose();
        let psi = gram.psi.row(j).transpose();
        let s = gram.s.row(j).transpose();
        let g_row = &gram.gram[j] * &row;
        let count = gram.counts[j] as f64;
        let m = mu[j];
        value += m * m + 2.0 * m * row.dot(&psi) + row.dot(&g_row) - 2.0 * m * count / t - 2.0 * row.dot(&s);
        grad_mu[j] = 2.0 * (m + row.dot(&psi)) - 2.0 * count / t;
        let gr = 2.0 * (psi * m + g_row) - 2.0 * s;
        grad_a.set_row(j, &gr.transpose());
    }
    LossValueGrad { value, grad_mu, grad_a }
}

/// Theta-independent pieces of the log-likelihood.
#[derive(Debug, Clone)]
pub struct LikelihoodCache {
    /// Per node `j`: row `i` is `H_{j,.}(t_{j,i}-)`.
    pub h_at_events: Vec<DMatrix<f64>>,
    pub psi: DMatrix<f64>,
    pub counts: Vec<usize>,
    pub horizon: f64,
}

impl LikelihoodCache {
    pub fn new(data: &EventData, decays: &DMatrix<f64>) -> Result<Self> {
        check_decays(data, decays)?;
        let d = data.dim();
        let merged = data.merged();
        let parts: Vec<(DMatrix<f64>, DVector<f64>)> = (0..d)
            .into_par_iter()
            .map(|j| {
                let row = decay_row(decays, j);
                (left_limits_row(data, &merged, &row, j), kernel_integrals(data, &row))
            })
            .collect();
        let mut psi = DMatrix::zeros(d, d);
        let mut h_at_events = Vec::with_capacity(d);
        for (j, (h, p)) in parts.into_iter().enumerate() {
            psi.set_row(j, &p.transpose());
            h_at_events.push(h);
        }
        Ok(Self { h_at_events, psi, counts: data.counts(), horizon: data.horizon() })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }
}

/// `-(1/T) sum_j [ sum_i log lambda_j(t_{j,i}-) - int_0^T lambda_j ]`.
pub fn neg_log_likelihood(params: &ModelParams, cache: &LikelihoodCache) -> Result<LossValueGrad> {
    check_theta(params.mu(), params.adjacency(), cache.dim())?;
    let out = neg_log_likelihood_at(params.mu(), params.adjacency(), cache);
    if out.is_feasible() {
        Ok(out)
    } else {
        Err(Error::Infeasible("intensity is not positive at some event".into()))
    }
}

/// Likelihood at an arbitrary point; `value = +inf` flags an infeasible point.
pub fn neg_log_likelihood_at(mu: &DVector<f64>, a: &DMatrix<f64>, cache: &LikelihoodCache) -> LossValueGrad {
    let d = cache.dim();
    let t = cache.horizon;
    let per_node: Vec<Option<(f64, f64, DVector<f64>)>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let h = &cache.h_at_events[j];
            let row = a.row(j).transpose();
            let psi = cache.psi.row(j).transpose();
            let lambdas = h * &row;
            let mut log_sum = 0.0;
            let mut inv = DVector::zeros(h.nrows());
            for (i, l) in lambdas.iter().enumerate() {
                let l = l + mu[j];
                if !(l > 0.0) || !l.is_finite() {
                    return None;
                }
                log_sum += l.ln();
                inv[i] = 1.0 / l;
            }
            let value = mu[j] + row.dot(&psi) - log_sum / t;
            let grad_mu = 1.0 - inv.sum() / t;
            let grad_row = psi - h.tr_mul(&inv) / t;
            Some((value, grad_mu, grad_row))
        })
        .collect();

    let mut out = LossValueGrad { value: 0.0, grad_mu: DVector::zeros(d), grad_a: DMatrix::zeros(d, d) };
    for (j, part) in per_node.into_iter().enumerate() {
        let Some((v, gm, gr)) = part else {
            return LossValueGrad::infeasible(d);
        };
        out.value += v;
        out.grad_mu[j] = gm;
        out.grad_a.set_row(j, &gr.transpose());
    }
    out
}

/// Log-likelihood per unit time with each event intensity floored at
/// `floor`, so a zero-intensity event costs `log(floor)` instead of `-inf`.
pub fn held_out_log_likelihood(mu: &DVector<f64>, a: &DMatrix<f64>, cache: &LikelihoodCache, floor: f64) -> f64 {
    let d = cache.dim();
    let t = cache.horizon;
    (0..d)
        .into_par_iter()
        .map(|j| {
            let row = a.row(j).transpose();
            let compensator = mu[j] + row.dot(&cache.psi.row(j).transpose());
            let log_sum: f64 = (&cache.h_at_events[j] * &row).iter().map(|l| (l + mu[j]).max(floor).ln()).sum();
            log_sum / t - compensator
        })
        .sum()
}
