//! Observable statistics of the kernel-filtered process `H_{j,k}(t)` and the
//! data-driven penalty weights built on them.
//!
//! `H_{j,k}(t) = sum_{t_{k,i} < t} exp(-alpha_{j,k} (t - t_{k,i}))`. All
//! integrals against `dN` use left limits `H(t-)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{operator_norm, EventData};

#[derive(Debug, Clone)]
pub struct FeatureStats {
    /// Per node `j`, row `i` holds `H_{j,.}(t_{j,i}-)`.
    pub h_at_events: Vec<DMatrix<f64>>,
    /// Running suprema `sup_{s <= T} H_{j,k}(s)`.
    pub b: DMatrix<f64>,
    pub vhat: DMatrix<f64>,
    /// Diagonal of `V1`.
    pub vhat1: DVector<f64>,
    pub vhat2: DMatrix<f64>,
    /// `sup_{s <= T} max_j ||H_{j,.}(s)||_2`.
    pub sup_h_2inf: f64,
    pub counts: Vec<usize>,
    pub horizon: f64,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn vhat1_opnorm(&self) -> f64 {
        self.vhat1.iter().copied().fold(0.0, f64::max)
    }

    pub fn vhat2_opnorm(&self) -> f64 {
        operator_norm(&self.vhat2)
    }
}

/// Kernel state `H(t)` advanced through the merged event stream.
pub(crate) struct KernelState<'a> {
    decays: &'a DMatrix<f64>,
    uniform: Option<f64>,
    pub h: DMatrix<f64>,
}

impl<'a> KernelState<'a> {
    pub fn new(decays: &'a DMatrix<f64>) -> Self {
        let first = decays[(0, 0)];
        let uniform = decays.iter().all(|&a| a == first).then_some(first);
        let d = decays.nrows();
        Self { decays, uniform, h: DMatrix::zeros(d, d) }
    }

    pub fn decay(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        match self.uniform {
            Some(alpha) => self.h *= (-alpha * dt).exp(),
            None => {
                for (v, a) in self.h.iter_mut().zip(self.decays.iter()) {
                    *v *= (-a * dt).exp();
                }
            }
        }
    }

    pub fn jump(&mut self, node: usize) {
        self.h.column_mut(node).add_scalar_mut(1.0);
    }

    pub fn max_row_norm_sq(&self) -> f64 {
        self.h.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max)
    }
}

/// Groups of simultaneous events: `(time, nodes)`.
pub(crate) fn event_groups(data: &EventData) -> Vec<(f64, Vec<usize>)> {
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (t, k) in data.merged() {
        match groups.last_mut() {
            Some((last, nodes)) if *last == t => nodes.push(k),
            _ => groups.push((t, vec![k])),
        }
    }
    groups
}

pub(crate) fn check_decays(data: &EventData, decays: &DMatrix<f64>) -> Result<()> {
    let d = data.dim();
    if decays.shape() != (d, d) {
        return Err(Error::Dimension(format!("decays {:?} for d = {d}", decays.shape())));
    }
    if decays.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::InvalidParams("decays must be finite and > 0".into()));
    }
    Ok(())
}

/// Single sweep over the events in time order; `O(events * d^2)`.
pub fn compute_stats(data: &EventData, decays: &DMatrix<f64>) -> Result<FeatureStats> {
    check_decays(data, decays)?;
    let d = data.dim();
    let horizon = data.horizon();
    let counts = data.counts();
    let mut h_at_events: Vec<DMatrix<f64>> = counts.iter().map(|&n| DMatrix::zeros(n, d)).collect();
    let mut seen = vec![0usize; d];
    let mut b = DMatrix::zeros(d, d);
    let mut vhat = DMatrix::zeros(d, d);
    let mut vhat1 = DVector::zeros(d);
    let mut vhat2 = DMatrix::zeros(d, d);
    let mut sup_sq: f64 = 0.0;

    let mut state = KernelState::new(decays);
    let mut now = 0.0;
    for (t, nodes) in event_groups(data) {
        state.decay(t - now);
        now = t;
        let norm_sq = state.max_row_norm_sq();
        for &l in &nodes {
            let row = state.h.row(l);
            h_at_events[l].row_mut(seen[l]).copy_from(&row);
            seen[l] += 1;
            for k in 0..d {
                vhat[(l, k)] += row[k] * row[k];
            }
            vhat1[l] += norm_sq;
            let row_sq = row.norm_squared();
            if row_sq > 0.0 {
                let col = state.h.column(l);
                let scale = norm_sq / row_sq;
                vhat2.ger(scale, &col, &col, 1.0);
            }
        }
        for &l in &nodes {
            state.jump(l);
        }
        for &l in &nodes {
            for j in 0..d {
                b[(j, l)] = f64::max(b[(j, l)], state.h[(j, l)]);
            }
        }
        sup_sq = sup_sq.max(state.max_row_norm_sq());
    }

    vhat /= horizon;
    vhat1 /= horizon;
    vhat2 /= horizon;
    Ok(FeatureStats { h_at_events, b, vhat, vhat1, vhat2, sup_h_2inf: sup_sq.sqrt(), counts, horizon })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Theoretical,
    Practical,
    /// Practical formula with node statistics averaged out (unweighted L1).
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    pub w: DVector<f64>,
    pub big_w: DMatrix<f64>,
    pub tau: f64,
    pub x: f64,
    pub mode: WeightMode,
    pub c1: f64,
    pub c2: f64,
}

impl PenaltyWeights {
    pub fn zeros(d: usize) -> Self {
        Self {
            w: DVector::zeros(d),
            big_w: DMatrix::zeros(d, d),
            tau: 0.0,
            x: 0.0,
            mode: WeightMode::Uniform,
            c1: 0.0,
            c2: 0.0,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }
}

/// `2 log log(max(arg, e))`
fn iterated_log(arg: f64) -> f64 {
    2.0 * arg.max(std::f64::consts::E).ln().ln()
}

pub fn ell_node(count: usize, x: f64) -> f64 {
    iterated_log((6.0 * count as f64 + 56.0 * x) / (112.0 * x))
}

/// Iterated-log correction for pair `(j,k)`; zero when `B_{j,k} = 0`.
pub fn ell_pair(vhat: f64, b: f64, x: f64, horizon: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    let b2 = b * b;
    iterated_log((6.0 * horizon * vhat + 56.0 * x * b2) / (112.0 * x * b2))
}

pub fn ell_opnorm(stats: &FeatureStats, x: f64) -> f64 {
    let s2 = stats.sup_h_2inf * stats.sup_h_2inf;
    let shift = 2.0 * (4.0 + s2 / 3.0) * x;
    iterated_log((2.0 * stats.vhat1_opnorm() + shift) / x)
        + iterated_log((2.0 * stats.vhat2_opnorm() + shift) / x)
        + iterated_log(s2)
}

/// Trace-norm level `tau` at confidence `x`.
pub fn theoretical_tau(stats: &FeatureStats, x: f64) -> f64 {
    let d = stats.dim() as f64;
    let t = stats.horizon;
    let level = x + d.ln() + ell_opnorm(stats, x);
    let variance = stats.vhat1_opnorm().max(stats.vhat2_opnorm());
    8.0 * (level * variance / t).sqrt() + 2.0 * level * (10.34 + 2.65 * stats.sup_h_2inf) / t
}

pub fn theoretical_weights(stats: &FeatureStats, x: f64) -> Result<PenaltyWeights> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Config(format!("confidence level x must be > 0, got {x}")));
    }
    let t = stats.horizon;
    if !(t > 0.0) {
        return Err(Error::Config("horizon must be > 0".into()));
    }
    let d = stats.dim();
    let log_d = (d as f64).ln();
    let sqrt2 = std::f64::consts::SQRT_2;
    let w = DVector::from_fn(d, |j, _| {
        let n = stats.counts[j];
        let level = x + log_d + ell_node(n, x);
        6.0 * sqrt2 * (level * (n as f64 / t) / t).sqrt() + 27.93 * level / t
    });
    let big_w = DMatrix::from_fn(d, d, |j, k| {
        let b = stats.b[(j, k)];
        if b <= 0.0 {
            return 0.0;
        }
        let v = stats.vhat[(j, k)];
        let level = x + 2.0 * log_d + ell_pair(v, b, x, t);
        4.0 * sqrt2 * (level * v / t).sqrt() + 18.62 * level * b / t
    });
    Ok(PenaltyWeights {
        w,
        big_w,
        tau: theoretical_tau(stats, x),
        x,
        mode: WeightMode::Theoretical,
        c1: 0.0,
        c2: 0.0,
    })
}

/// Simplified weights with `x = log T`; `tau` is left at 0 for the caller.
pub fn practical_weights(stats: &FeatureStats, c1: f64, c2: f64) -> Result<PenaltyWeights> {
    let (level, t) = practical_level(stats, c1, c2)?;
    let d = stats.dim();
    let w = DVector::from_fn(d, |j, _| c1 * (level * (stats.counts[j] as f64 / t) / t).sqrt());
    let big_w = stats.vhat.map(|v| c2 * (level * v / t).sqrt());
    Ok(PenaltyWeights { w, big_w, tau: 0.0, x: t.ln(), mode: WeightMode::Practical, c1, c2 })
}

/// Practical formula evaluated at the node-averaged statistics, so every
/// coordinate of `mu` (and of `A`) gets the same weight.
pub fn uniform_weights(stats: &FeatureStats, c1: f64, c2: f64) -> Result<PenaltyWeights> {
    let (level, t) = practical_level(stats, c1, c2)?;
    let d = stats.dim();
    let mean_count = stats.counts.iter().sum::<usize>() as f64 / d as f64;
    let mean_vhat = stats.vhat.mean();
    let w = DVector::from_element(d, c1 * (level * (mean_count / t) / t).sqrt());
    let big_w = DMatrix::from_element(d, d, c2 * (level * mean_vhat / t).sqrt());
    Ok(PenaltyWeights { w, big_w, tau: 0.0, x: t.ln(), mode: WeightMode::Uniform, c1, c2 })
}

fn practical_level(stats: &FeatureStats, c1: f64, c2: f64) -> Result<(f64, f64)> {
    if !(c1 >= 0.0 && c2 >= 0.0 && c1.is_finite() && c2.is_finite()) {
        return Err(Error::Config("c1 and c2 must be finite and >= 0".into()));
    }
    let t = stats.horizon;
    if !(t > 1.0) {
        return Err(Error::Config(format!("practical weights need T > 1, got {t}")));
    }
    Ok((t.ln() + (stats.dim() as f64).ln(), t))
}
