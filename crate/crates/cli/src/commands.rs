use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hawkes_core::crossval::fit_procedure;
use hawkes_core::experiment::AggregateRow;
use hawkes_core::io::{read_events, read_matrix, read_vector, write_events, write_matrix, write_vector};
use hawkes_core::metrics::evaluate;
use hawkes_core::{
    aggregate, check_opnorm_bound, check_pointwise_bound, compute_stats, cross_validate, generate_scenario,
    practical_weights, run_experiment, theoretical_weights, uniform_weights, BoundReport, BoundScenario,
    CvGrid, CvPoint, EventData, ExperimentConfig, ExperimentRow, FitConfig, LossKind, ModelParams, PenaltySpec,
    PenaltyWeights, Procedure, ScenarioConfig, SimConfig, SolverKind, Theta, WeightMode,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::args::{
    read_config, BoundChoice, CheckBoundsArgs, EvalArgs, EventSource, ExperimentArgs, FitArgs, SimulateArgs,
    WeightsArgs, XvalArgs,
};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| CliError::missing(flag))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

/// Print to stdout and, when `out` is set, write the same text there.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = to_json(value)?;
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_text(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn decay_matrix(d: usize, alpha: Option<f64>, decays: Option<&Path>) -> Result<DMatrix<f64>> {
    match decays {
        Some(path) => Ok(read_matrix(path)?),
        None => Ok(DMatrix::from_element(d, d, alpha.unwrap_or(1.0))),
    }
}

fn load_source(source: &EventSource) -> Result<(EventData, DMatrix<f64>)> {
    let path = require(source.events.as_deref(), "events")?;
    let data = read_events(path, source.horizon)?;
    let decays = decay_matrix(data.dim(), source.alpha, source.decays.as_deref())?;
    if decays.shape() != (data.dim(), data.dim()) {
        return Err(CliError::new("dimension", format!("decay matrix is {:?}, events have d = {}", decays.shape(), data.dim())));
    }
    Ok((data, decays))
}

fn write_weights(dir: &Path, weights: &PenaltyWeights) -> Result<()> {
    #[derive(Serialize)]
    struct WeightsFile<'a> {
        mode: WeightMode,
        x: f64,
        c1: f64,
        c2: f64,
        tau: f64,
        w: &'a [f64],
    }
    write_vector(&dir.join("w.csv"), &weights.w)?;
    write_matrix(&dir.join("W.csv"), &weights.big_w)?;
    let file = WeightsFile {
        mode: weights.mode,
        x: weights.x,
        c1: weights.c1,
        c2: weights.c2,
        tau: weights.tau,
        w: weights.w.as_slice(),
    };
    write_json(&dir.join("weights.json"), &file)
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let out = require(args.out, "out")?;
    let horizon = require(args.horizon, "T")?;
    let seed = args.seed.unwrap_or(0);
    let explicit = args.mu.is_some() || args.mu_file.is_some() || args.adjacency.is_some();
    let params = if explicit {
        let mu_file = args.mu_file.as_deref().map(read_vector).transpose()?;
        let adjacency = args.adjacency.as_deref().map(read_matrix).transpose()?;
        let d = args
            .d
            .or(mu_file.as_ref().map(|v| v.len()))
            .or(adjacency.as_ref().map(|a| a.nrows()))
            .unwrap_or(1);
        let mu = match (mu_file, args.mu) {
            (Some(v), _) => v,
            (None, Some(m)) => DVector::from_element(d, m),
            (None, None) => return Err(CliError::missing("mu")),
        };
        let adjacency = adjacency.unwrap_or_else(|| DMatrix::zeros(d, d));
        ModelParams::new(mu, adjacency, decay_matrix(d, args.alpha, args.decays.as_deref())?)?
    } else {
        let mut scenario = ScenarioConfig::scaled(args.d.unwrap_or(100), args.scenario_seed.unwrap_or(seed));
        if let Some(alpha) = args.alpha {
            scenario.alpha = alpha;
        }
        generate_scenario(&scenario)?.params
    };

    let mut config = SimConfig::new(params, horizon, seed);
    config.max_events = args.max_events;
    config.require_stationary = !args.allow_unstable.unwrap_or(false);
    let data = hawkes_core::simulate(&config)?;

    create_dir(&out)?;
    write_events(&out.join("events.json"), &data)?;
    write_vector(&out.join("mu.csv"), config.params.mu())?;
    write_matrix(&out.join("A.csv"), config.params.adjacency())?;
    write_matrix(&out.join("alpha.csv"), config.params.decays())?;

    #[derive(Serialize)]
    struct Summary {
        d: usize,
        #[serde(rename = "T")]
        horizon: f64,
        seed: u64,
        total_events: usize,
        counts: Vec<usize>,
    }
    emit(
        &Summary { d: data.dim(), horizon, seed, total_events: data.total_events(), counts: data.counts() },
        None,
    )
}

#[derive(Serialize)]
struct Diagnostics {
    procedure: Procedure,
    loss: LossKind,
    solver: SolverKind,
    c1: f64,
    c2: f64,
    tau: f64,
    iterations_used: usize,
    converged: bool,
    final_step: f64,
    best_objective: f64,
    sufficient_decrease_holds: bool,
    nonzero_entries_a: usize,
    objective_trace: Vec<f64>,
}

pub fn fit(args: FitArgs) -> Result<()> {
    let out = require(args.out.clone(), "out")?;
    let procedure = require(args.procedure, "procedure")?;
    let (data, decays) = load_source(&args.source)?;
    let d = data.dim();
    let loss = args.loss.unwrap_or(LossKind::LogLikelihood);
    let point = CvPoint { c1: args.c1.unwrap_or(1.0), c2: args.c2.unwrap_or(1.0), tau: args.tau.unwrap_or(0.01) };
    let mut base = FitConfig::new(loss, PenaltySpec::none(d));
    if let Some(n) = args.max_iter {
        base.max_iter = n;
    }
    if let Some(tol) = args.tol {
        base.tol = tol;
    }
    let result = fit_procedure(procedure, point, &data, &decays, &base)?;

    create_dir(&out)?;
    write_vector(&out.join("mu_hat.csv"), &result.theta_hat.mu)?;
    write_matrix(&out.join("A_hat.csv"), &result.theta_hat.a)?;
    if matches!(procedure, Procedure::WL1 | Procedure::WL1Nuclear) {
        let stats = compute_stats(&data, &decays)?;
        write_weights(&out, &procedure.penalty(&stats, point)?.weights)?;
    }
    let diagnostics = Diagnostics {
        procedure,
        loss,
        solver: result.solver,
        c1: point.c1,
        c2: point.c2,
        tau: if procedure.uses_trace() { point.tau } else { 0.0 },
        iterations_used: result.iterations_used,
        converged: result.converged,
        final_step: result.final_step,
        best_objective: result.best_objective,
        sufficient_decrease_holds: result.decrease_log.iter().all(|c| c.holds(1e-12)),
        nonzero_entries_a: result.theta_hat.a.iter().filter(|v| **v != 0.0).count(),
        objective_trace: result.objective_trace.clone(),
    };
    write_json(&out.join("diagnostics.json"), &diagnostics)?;

    #[derive(Serialize)]
    struct Summary {
        procedure: Procedure,
        solver: SolverKind,
        iterations_used: usize,
        converged: bool,
        best_objective: f64,
    }
    emit(
        &Summary {
            procedure,
            solver: result.solver,
            iterations_used: result.iterations_used,
            converged: result.converged,
            best_objective: result.best_objective,
        },
        None,
    )
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let pick = |file: &Option<PathBuf>, dir: &Option<PathBuf>, name: &str, flag: &str| -> Result<PathBuf> {
        file.clone().or_else(|| dir.as_ref().map(|d| d.join(name))).ok_or_else(|| CliError::missing(flag))
    };
    let estimate = Theta {
        mu: read_vector(&pick(&args.mu_hat, &args.estimate, "mu_hat.csv", "mu-hat")?)?,
        a: read_matrix(&pick(&args.a_hat, &args.estimate, "A_hat.csv", "a-hat")?)?,
    };
    let truth = Theta {
        mu: read_vector(&pick(&args.mu, &args.truth, "mu.csv", "mu")?)?,
        a: read_matrix(&pick(&args.a, &args.truth, "A.csv", "a")?)?,
    };
    for theta in [&estimate, &truth] {
        if theta.a.shape() != (theta.mu.len(), theta.mu.len()) {
            return Err(CliError::new("dimension", "baseline length and matrix shape disagree"));
        }
    }
    let report = evaluate(&estimate, &truth, args.threshold.unwrap_or(0.0))?;
    emit(&report, args.out.as_deref())
}

pub fn xval(args: XvalArgs) -> Result<()> {
    let procedure = require(args.procedure, "procedure")?;
    let (data, decays) = load_source(&args.source)?;
    let defaults = CvGrid::default_grid();
    let grid = CvGrid {
        c1: args.c1.unwrap_or(defaults.c1),
        c2: args.c2.unwrap_or(defaults.c2),
        tau: args.tau.unwrap_or(defaults.tau),
    };
    let mut base = FitConfig::new(args.loss.unwrap_or(LossKind::LogLikelihood), PenaltySpec::none(data.dim()));
    if let Some(n) = args.max_iter {
        base.max_iter = n;
    }
    let outcome = cross_validate(&data, &decays, procedure, &grid, &base)?;
    emit(&outcome, args.out.as_deref())
}

pub fn weights(args: WeightsArgs) -> Result<()> {
    let out = require(args.out.clone(), "out")?;
    let (data, decays) = load_source(&args.source)?;
    let stats = compute_stats(&data, &decays)?;
    let (c1, c2) = (args.c1.unwrap_or(1.0), args.c2.unwrap_or(1.0));
    let weights = match args.mode.unwrap_or(WeightMode::Theoretical) {
        WeightMode::Theoretical => {
            let x = args.x.unwrap_or((data.dim() as f64).ln());
            if !(x > 0.0) {
                return Err(CliError::new("config", "default x = log d is 0 for d = 1; pass --x"));
            }
            theoretical_weights(&stats, x)?
        }
        WeightMode::Practical => practical_weights(&stats, c1, c2)?,
        WeightMode::Uniform => uniform_weights(&stats, c1, c2)?,
    };
    create_dir(&out)?;
    write_weights(&out, &weights)?;
    print!("{}", fs::read_to_string(out.join("weights.json"))?);
    Ok(())
}

#[derive(Serialize)]
struct BoundOutput {
    #[serde(flatten)]
    report: BoundReport,
    consistent: bool,
}

pub fn check_bounds(args: CheckBoundsArgs) -> Result<()> {
    let d = args.d.unwrap_or(3);
    let horizon = args.horizon.unwrap_or(200.0);
    let x = args.x.unwrap_or(8.0);
    let reps = args.reps.unwrap_or(2000);
    let seed = args.seed.unwrap_or(0);
    let scenario = match args.poisson {
        Some(rate) => BoundScenario::poisson(d, rate, horizon)?,
        None => BoundScenario::standard(d, horizon)?,
    };
    let kind = args.kind.unwrap_or(BoundChoice::Both);
    let mut reports = Vec::new();
    if kind != BoundChoice::OperatorNorm {
        reports.push(check_pointwise_bound(&scenario, x, reps, seed)?);
    }
    if kind != BoundChoice::Pointwise {
        reports.push(check_opnorm_bound(&scenario, x, reps, seed)?);
    }
    let outputs: Vec<BoundOutput> =
        reports.into_iter().map(|report| BoundOutput { consistent: report.consistent(), report }).collect();
    emit(&outputs, args.out.as_deref())
}

fn experiment_config(args: &ExperimentArgs, config: Option<&Path>) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let seed = args.seed.unwrap_or(0);
    let (mut cfg, output_dir) = match config {
        Some(path) => {
            let mut map = read_config(path)?;
            let output_dir = map.remove("output_dir").map(serde_json::from_value::<PathBuf>).transpose()?;
            let cfg: ExperimentConfig = serde_json::from_value(serde_json::Value::Object(map))
                .map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
            (cfg, output_dir)
        }
        None => (ExperimentConfig::scaled(args.d.unwrap_or(30), vec![250.0, 500.0, 1000.0], 10, seed), None),
    };
    if config.is_some() {
        if let Some(d) = args.d {
            cfg.scenario = ScenarioConfig::scaled(d, cfg.scenario.seed);
        }
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
    }
    if let Some(h) = &args.horizons {
        cfg.horizons = h.clone();
    }
    if let Some(n) = args.reps {
        cfg.n_replications = n;
    }
    if let Some(p) = &args.procedures {
        cfg.procedures = p.clone();
    }
    if let Some(loss) = args.loss {
        cfg.loss = loss;
    }
    if let Some(n) = args.max_iter {
        cfg.max_iter = n;
    }
    if let Some(c1) = &args.c1 {
        cfg.grid.c1 = c1.clone();
    }
    if let Some(c2) = &args.c2 {
        cfg.grid.c2 = c2.clone();
    }
    if let Some(tau) = &args.tau {
        cfg.grid.tau = tau.clone();
    }
    cfg.validate()?;
    Ok((cfg, args.out.clone().or(output_dir)))
}

fn results_csv(rows: &[ExperimentRow]) -> String {
    let mut s = String::from("procedure,T,rep,error,auc,c1,c2,tau,iterations,converged\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.procedure, r.horizon, r.rep, r.error, r.auc, r.c1, r.c2, r.tau, r.iterations, r.converged
        );
    }
    s
}

fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from("procedure,T,mean_error,mean_auc,n\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.procedure, r.horizon, r.mean_error, r.mean_auc, r.n);
    }
    s
}

fn timings_csv(rows: &[ExperimentRow]) -> String {
    let mut s = String::from("procedure,T,rep,runtime_secs\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.procedure, r.horizon, r.rep, r.runtime_secs);
    }
    s
}

pub fn experiment(args: ExperimentArgs, config: Option<&Path>) -> Result<()> {
    let (cfg, out) = experiment_config(&args, config)?;
    let out = require(out, "out")?;
    create_dir(&out)?;
    write_json(&out.join("config.json"), &cfg)?;
    let rows = run_experiment(&cfg, |rep, rows| {
        let path = out.join(format!("rep_{rep:03}.json"));
        let text = serde_json::to_string_pretty(rows).expect("rows serialize") + "\n";
        fs::write(&path, text).map_err(|e| hawkes_core::Error::Config(format!("{}: {e}", path.display())))
    })?;
    let summary = aggregate(&rows);
    write_text(&out.join("results.csv"), &results_csv(&rows))?;
    write_text(&out.join("aggregate.csv"), &aggregate_csv(&summary))?;
    if args.timings {
        write_text(&out.join("timings.csv"), &timings_csv(&rows))?;
    }
    emit(&summary, None)
}
