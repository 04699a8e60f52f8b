//! End-to-end benchmark: simulate once per replication on the longest
//! horizon, truncate to each shorter horizon, tune every procedure by
//! held-out likelihood, refit on the full prefix and score against the truth.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossval::{cross_validate, fit_procedure, CvGrid, Procedure};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::simulate::{generate_scenario, simulate_stream, ScenarioConfig, SimConfig};
use crate::solver::{FitConfig, LossKind, Theta};
use crate::penalty::PenaltySpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub horizons: Vec<f64>,
    pub n_replications: usize,
    pub procedures: Vec<Procedure>,
    pub grid: CvGrid,
    pub seed: u64,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_loss() -> LossKind {
    LossKind::LogLikelihood
}

fn default_max_iter() -> usize {
    100
}

impl ExperimentConfig {
    /// Community benchmark on `d` nodes with boxes rescaled from the 100-node layout.
    pub fn scaled(d: usize, horizons: Vec<f64>, n_replications: usize, seed: u64) -> Self {
        Self {
            scenario: ScenarioConfig::scaled(d, seed),
            horizons,
            n_replications,
            procedures: Procedure::ALL.to_vec(),
            grid: CvGrid::default_grid(),
            seed,
            loss: LossKind::LogLikelihood,
            max_iter: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.procedures.is_empty() {
            return Err(Error::Config("at least one procedure is required".into()));
        }
        if self.horizons.is_empty() || self.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("horizons must be nonempty and strictly increasing".into()));
        }
        if self.horizons[0] <= 2.0 {
            return Err(Error::Config("horizons must exceed 2 time units".into()));
        }
        if self.n_replications == 0 {
            return Err(Error::Config("n_replications must be positive".into()));
        }
        Ok(())
    }

    pub fn fit_config(&self, d: usize) -> FitConfig {
        let mut cfg = FitConfig::new(self.loss, PenaltySpec::none(d));
        cfg.max_iter = self.max_iter;
        cfg
    }
}

impl CvGrid {
    pub fn default_grid() -> Self {
        Self {
            c1: vec![0.25, 1.0, 4.0],
            c2: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            tau: vec![1e-3, 3e-3, 1e-2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub procedure: Procedure,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub rep: usize,
    pub error: f64,
    pub auc: f64,
    pub c1: f64,
    pub c2: f64,
    pub tau: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Wall-clock seconds for tuning plus the final fit; not reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub procedure: Procedure,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub mean_error: f64,
    pub mean_auc: f64,
    pub n: usize,
}

/// Runs one replication: all horizons and procedures.
pub fn run_replication(config: &ExperimentConfig, rep: usize) -> Result<Vec<ExperimentRow>> {
    config.validate()?;
    let scenario = generate_scenario(&config.scenario)?;
    let truth = Theta::from(&scenario.params);
    let decays = scenario.params.decays().clone();
    let max_t = *config.horizons.last().expect("validated");
    let sim = SimConfig::new(scenario.params.clone(), max_t, config.seed);
    let full = simulate_stream(&sim, rep as u64)?;
    let base = config.fit_config(scenario.params.dim());

    let mut rows = Vec::new();
    for &horizon in &config.horizons {
        let data = full.truncate(horizon)?;
        for &procedure in &config.procedures {
            let start = Instant::now();
            let cv = cross_validate(&data, &decays, procedure, &config.grid, &base)?;
            let fit = fit_procedure(procedure, cv.best, &data, &decays, &base)?;
            let report = evaluate(&fit.theta_hat, &truth, 0.0)?;
            rows.push(ExperimentRow {
                procedure,
                horizon,
                rep,
                error: report.rel_l2_error,
                auc: report.auc,
                c1: cv.best.c1,
                c2: cv.best.c2,
                tau: cv.best.tau,
                iterations: fit.iterations_used,
                converged: fit.converged,
                runtime_secs: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

/// All replications in parallel; `on_replication` sees each finished
/// replication (in completion order). Returned rows are ordered by
/// replication, horizon, then procedure.
pub fn run_experiment<F>(config: &ExperimentConfig, on_replication: F) -> Result<Vec<ExperimentRow>>
where
    F: Fn(usize, &[ExperimentRow]) -> Result<()> + Sync,
{
    config.validate()?;
    let per_rep = (0..config.n_replications)
        .into_par_iter()
        .map(|rep| {
            let rows = run_replication(config, rep)?;
            on_replication(rep, &rows)?;
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

/// Mean error and AUC per (procedure, horizon), in first-appearance order.
pub fn aggregate(rows: &[ExperimentRow]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|a| a.procedure == r.procedure && a.horizon == r.horizon) {
            Some(a) => {
                a.mean_error += r.error;
                a.mean_auc += r.auc;
                a.n += 1;
            }
            None => out.push(AggregateRow {
                procedure: r.procedure,
                horizon: r.horizon,
                mean_error: r.error,
                mean_auc: r.auc,
                n: 1,
            }),
        }
    }
    for a in &mut out {
        a.mean_error /= a.n as f64;
        a.mean_auc /= a.n as f64;
    }
    out
}
