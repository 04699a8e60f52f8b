//! The five estimation procedures and held-out likelihood tuning of their
//! penalty constants.
//!
//! The window `[0, T]` is split in half. Constants are fitted on the first
//! half and scored by the log-likelihood of the second half, whose events are
//! shifted to start at 0 and whose intensities see no history from the
//! training half (cold start). Test intensities are floored; see
//! [`HELD_OUT_FLOOR_FRACTION`].

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compute_stats, practical_weights, uniform_weights, FeatureStats, PenaltyWeights};
use crate::loss::{held_out_log_likelihood, LikelihoodCache};
use crate::model::EventData;
use crate::penalty::PenaltySpec;
use crate::solver::{fit_objective, FitConfig, FitResult, Objective};

/// Test-event intensities are floored at this fraction of the mean per-node
/// test rate. Without it, any node whose baseline is shrunk to zero scores
/// `-inf` and the search degenerates to the emptiest model.
pub const HELD_OUT_FLOOR_FRACTION: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Procedure {
    NoPen,
    L1,
    #[serde(rename = "wL1")]
    WL1,
    L1Nuclear,
    #[serde(rename = "wL1Nuclear")]
    WL1Nuclear,
}

impl Procedure {
    pub const ALL: [Procedure; 5] =
        [Procedure::NoPen, Procedure::L1, Procedure::WL1, Procedure::L1Nuclear, Procedure::WL1Nuclear];

    pub fn name(self) -> &'static str {
        match self {
            Procedure::NoPen => "NoPen",
            Procedure::L1 => "L1",
            Procedure::WL1 => "wL1",
            Procedure::L1Nuclear => "L1Nuclear",
            Procedure::WL1Nuclear => "wL1Nuclear",
        }
    }

    pub fn uses_trace(self) -> bool {
        matches!(self, Procedure::L1Nuclear | Procedure::WL1Nuclear)
    }

    pub fn is_penalized(self) -> bool {
        self != Procedure::NoPen
    }

    /// Penalty for this procedure at constants `point`, from statistics of the fitting window.
    pub fn penalty(self, stats: &FeatureStats, point: CvPoint) -> Result<PenaltySpec> {
        let weights = |f: fn(&FeatureStats, f64, f64) -> Result<PenaltyWeights>| f(stats, point.c1, point.c2);
        Ok(match self {
            Procedure::NoPen => PenaltySpec::none(stats.dim()),
            Procedure::L1 => PenaltySpec::l1(weights(uniform_weights)?),
            Procedure::WL1 => PenaltySpec::l1(weights(practical_weights)?),
            Procedure::L1Nuclear => PenaltySpec::l1_trace(weights(uniform_weights)?.with_tau(point.tau)),
            Procedure::WL1Nuclear => PenaltySpec::l1_trace(weights(practical_weights)?.with_tau(point.tau)),
        })
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Procedure::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown procedure {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub c1: f64,
    pub c2: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub tau: Vec<f64>,
}

impl CvGrid {
    /// Grid points relevant to `procedure`, in enumeration order (c1, then c2, then tau).
    pub fn points(&self, procedure: Procedure) -> Vec<CvPoint> {
        if !procedure.is_penalized() {
            return vec![CvPoint { c1: 0.0, c2: 0.0, tau: 0.0 }];
        }
        let taus: &[f64] = if procedure.uses_trace() { &self.tau } else { &[0.0] };
        let mut out = Vec::new();
        for &c1 in &self.c1 {
            for &c2 in &self.c2 {
                for &tau in taus {
                    out.push(CvPoint { c1, c2, tau });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub point: CvPoint,
    /// Held-out log-likelihood per unit time, with the intensity floor applied.
    pub test_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub procedure: Procedure,
    pub best: CvPoint,
    pub scores: Vec<CvScore>,
}

/// Fit `procedure` at constants `point` on `data` (weights computed on `data`).
pub fn fit_procedure(
    procedure: Procedure,
    point: CvPoint,
    data: &EventData,
    decays: &DMatrix<f64>,
    base: &FitConfig,
) -> Result<FitResult> {
    let stats = compute_stats(data, decays)?;
    let objective = Objective::build(base.loss_kind, data, decays)?;
    fit_with(procedure, point, &stats, &objective, base)
}

fn fit_with(
    procedure: Procedure,
    point: CvPoint,
    stats: &FeatureStats,
    objective: &Objective,
    base: &FitConfig,
) -> Result<FitResult> {
    let mut config = base.clone();
    config.penalty = procedure.penalty(stats, point)?;
    fit_objective(&config, objective)
}

pub fn cross_validate(
    data: &EventData,
    decays: &DMatrix<f64>,
    procedure: Procedure,
    grid: &CvGrid,
    base: &FitConfig,
) -> Result<CvOutcome> {
    let points = grid.points(procedure);
    if points.is_empty() {
        return Err(Error::Config("empty cross-validation grid".into()));
    }
    if points.len() == 1 {
        return Ok(CvOutcome { procedure, best: points[0], scores: Vec::new() });
    }
    let half = data.horizon() / 2.0;
    let train = data.truncate(half)?;
    let test = data.window(half, data.horizon())?;
    if train.total_events() == 0 || test.total_events() == 0 {
        return Err(Error::InvalidEvents("a cross-validation half contains no events".into()));
    }
    let stats = compute_stats(&train, decays)?;
    let objective = Objective::build(base.loss_kind, &train, decays)?;
    let test_cache = LikelihoodCache::new(&test, decays)?;
    let mean_rate = test.total_events() as f64 / (test.dim() as f64 * test.horizon());
    let floor = HELD_OUT_FLOOR_FRACTION * mean_rate;

    let scores = points
        .par_iter()
        .map(|&point| {
            let fit = fit_with(procedure, point, &stats, &objective, base)?;
            let theta = &fit.theta_hat;
            let test_loglik = held_out_log_likelihood(&theta.mu, &theta.a, &test_cache, floor);
            Ok(CvScore { point, test_loglik })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.test_loglik > scores[best].test_loglik {
            best = i;
        }
    }
    Ok(CvOutcome { procedure, best: scores[best].point, scores })
}
