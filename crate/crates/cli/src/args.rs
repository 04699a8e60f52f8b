//! Flag definitions. Every field is optional so that a `--config` JSON file
//! (keys = field names, `T` for the horizon) can supply it instead.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hawkes_core::{LossKind, Procedure, WeightMode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Overlay the flags that were given on top of the config file's values.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(flags: T, config: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = config else {
        return Ok(flags);
    };
    let mut merged = read_config(path)?;
    let known = serde_json::to_value(T::default())?;
    if let Some(key) = merged.keys().find(|k| known.get(k.as_str()).is_none()) {
        return Err(CliError::new("config", format!("{}: unknown key {key:?}", path.display())));
    }
    if let serde_json::Value::Object(given) = serde_json::to_value(&flags)? {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(serde_json::Value::Object(merged))
        .map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))
}

pub fn read_config(path: &Path) -> Result<serde_json::Map<String, serde_json::Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(serde_json::Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::new("config", format!("{}: expected a JSON object", path.display()))),
        Err(e) => Err(CliError::new("config", format!("{}: {e}", path.display()))),
    }
}

fn parse_procedure(s: &str) -> Result<Procedure, String> {
    s.parse().map_err(|e: hawkes_core::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "ls" | "least-squares" => Ok(LossKind::LeastSquares),
        "ll" | "log-likelihood" => Ok(LossKind::LogLikelihood),
        _ => Err(format!("unknown loss {s:?} (expected least-squares or log-likelihood)")),
    }
}

fn parse_mode(s: &str) -> Result<WeightMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "theoretical" => Ok(WeightMode::Theoretical),
        "practical" => Ok(WeightMode::Practical),
        "uniform" => Ok(WeightMode::Uniform),
        _ => Err(format!("unknown weight mode {s:?}")),
    }
}

/// Where events come from and which decays to assume.
#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
pub struct EventSource {
    /// Event file: JSON, or CSV with `node,time` rows.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Observation horizon (CSV input only; defaults to the last event time).
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    /// Common decay rate (default 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Decay matrix CSV; overrides --alpha.
    #[arg(long)]
    pub decays: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    /// Output directory for events.json, mu.csv, A.csv and alpha.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Observation horizon.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of nodes (default 100 for the community benchmark, 1 otherwise).
    #[arg(long)]
    pub d: Option<usize>,
    /// Common baseline intensity; selects explicit parameters instead of the benchmark.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Baseline vector file, one value per line.
    #[arg(long)]
    pub mu_file: Option<PathBuf>,
    /// Excitation matrix CSV (default: zero).
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// Common decay rate (default 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Decay matrix CSV; overrides --alpha.
    #[arg(long)]
    pub decays: Option<PathBuf>,
    /// Seed for drawing the benchmark parameters (default: --seed).
    #[arg(long)]
    pub scenario_seed: Option<u64>,
    /// Abort once this many events have been generated.
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Accept parameters with spectral radius >= 1.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub allow_unstable: Option<bool>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: EventSource,
    /// NoPen, L1, wL1, L1Nuclear or wL1Nuclear.
    #[arg(long, value_parser = parse_procedure)]
    pub procedure: Option<Procedure>,
    /// Constant on the baseline weights (default 1).
    #[arg(long)]
    pub c1: Option<f64>,
    /// Constant on the adjacency weights (default 1).
    #[arg(long)]
    pub c2: Option<f64>,
    /// Trace-norm weight for the Nuclear procedures (default 0.01).
    #[arg(long)]
    pub tau: Option<f64>,
    /// least-squares (ls) or log-likelihood (ll, default).
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output directory for mu_hat.csv, A_hat.csv, diagnostics.json (and weights).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    /// Directory holding mu_hat.csv and A_hat.csv.
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    /// Directory holding mu.csv and A.csv.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub mu_hat: Option<PathBuf>,
    #[arg(long)]
    pub a_hat: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<PathBuf>,
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Entries above this count as estimated edges (default 0).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct XvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: EventSource,
    #[arg(long, value_parser = parse_procedure)]
    pub procedure: Option<Procedure>,
    /// Comma-separated grid for c1.
    #[arg(long, value_delimiter = ',')]
    pub c1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub c2: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Also write the scores to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: EventSource,
    /// theoretical (default), practical or uniform.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<WeightMode>,
    /// Confidence level for theoretical weights (default log d).
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    /// Output directory for w.csv, W.csv and weights.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundChoice {
    Pointwise,
    OperatorNorm,
    Both,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckBoundsArgs {
    /// Which bound to check (default both).
    #[arg(long, value_enum)]
    pub kind: Option<BoundChoice>,
    /// Number of nodes (default 3).
    #[arg(long)]
    pub d: Option<usize>,
    /// Horizon (default 200).
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    /// Confidence level (default 8).
    #[arg(long)]
    pub x: Option<f64>,
    /// Replications (default 2000).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use a Poisson process with this rate on every node instead of the default Hawkes model.
    #[arg(long)]
    pub poisson: Option<f64>,
    /// Also write the reports to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The experiment reads its `--config` as a full experiment description
/// (plus an optional `output_dir`); these flags override parts of it.
#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    /// Output directory (or `output_dir` in the config file).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Nodes of the rescaled community benchmark (default 30).
    #[arg(long)]
    pub d: Option<usize>,
    /// Increasing horizons (default 250,500,1000).
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<f64>>,
    /// Replications (default 10).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of NoPen,L1,wL1,L1Nuclear,wL1Nuclear.
    #[arg(long, value_delimiter = ',', value_parser = parse_procedure)]
    pub procedures: Option<Vec<Procedure>>,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub c1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub c2: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// Also write wall-clock times to timings.csv (not reproducible).
    #[arg(long)]
    pub timings: bool,
}
