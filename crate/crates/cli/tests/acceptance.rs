//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hawkes_core::loss::{least_squares_at, neg_log_likelihood_at};
use hawkes_core::simulate::{simulate_stream, stream_rng};
use hawkes_core::{
    check_opnorm_bound, check_pointwise_bound, generate_scenario, precompute_gram, prox_l1_nonneg, prox_trace,
    run_experiment, simulate, BoundScenario, EventData, ExperimentConfig, FitConfig, LikelihoodCache, LossKind,
    ModelParams, PenaltySpec, Procedure, ScenarioConfig, SimConfig, Theta,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit_secs: f64, start: Instant, detail: String, cond: bool) -> Outcome {
    let secs = start.elapsed().as_secs_f64();
    check(cond && secs < limit_secs, format!("{detail}; {secs:.1}s (limit {limit_secs}s)"))
}

// ---------------------------------------------------------------- oracles

fn naive_h(data: &EventData, decays: &DMatrix<f64>, j: usize, k: usize, t: f64) -> f64 {
    data.node_events(k).iter().filter(|&&s| s < t).map(|&s| (-decays[(j, k)] * (t - s)).exp()).sum()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol * (left + right).abs() {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol, depth - 1)
}

/// Adaptive Simpson with relative tolerance, split at event times.
fn quad(data: &EventData, f: &dyn Fn(f64) -> f64) -> f64 {
    let mut cuts: Vec<f64> = data.merged().into_iter().map(|(t, _)| t).collect();
    cuts.push(data.horizon());
    let mut prev = 0.0;
    let mut total = 0.0;
    for c in cuts {
        if c > prev {
            let (fa, fm, fb) = (f(prev), f(0.5 * (prev + c)), f(c));
            let whole = (c - prev) / 6.0 * (fa + 4.0 * fm + fb);
            total += simpson(f, prev, c, fa, fm, fb, whole, 1e-12, 40);
        }
        prev = c;
    }
    total
}

fn random_params(r: &mut ChaCha8Rng, d: usize) -> ModelParams {
    let mu = DVector::from_fn(d, |_, _| r.random_range(0.2..1.0));
    let raw: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| r.random_range(0.0..1.0));
    let a = &raw * (0.5 / raw.norm().max(1e-12));
    let decays = DMatrix::from_fn(d, d, |_, _| r.random_range(0.5..3.0));
    ModelParams::new(mu, a, decays).unwrap()
}

/// Simulated instance with between 5 and `max_events` events.
fn instance(seed: u64, d: usize, max_events: usize) -> (ModelParams, EventData) {
    let params = random_params(&mut stream_rng(seed, 1), d);
    let mut horizon = 30.0 / d as f64;
    loop {
        let data = simulate(&SimConfig::new(params.clone(), horizon, seed)).unwrap();
        let n = data.total_events();
        if (5..=max_events).contains(&n) {
            return (params, data);
        }
        horizon *= if n > max_events { 0.7 } else { 1.5 };
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

// ---------------------------------------------------------------- criteria

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for d in [1usize, 3] {
        let (params, data) = instance(10 + d as u64, d, 100);
        let gram = precompute_gram(&data, params.decays()).unwrap();
        let cache = LikelihoodCache::new(&data, params.decays()).unwrap();
        let mut r = stream_rng(d as u64, 2);
        for _ in 0..20 {
            let mu = DVector::from_fn(d, |_, _| r.random_range(0.1..1.0));
            let a = DMatrix::from_fn(d, d, |_, _| r.random_range(0.0..0.8));
            for kind in [LossKind::LeastSquares, LossKind::LogLikelihood] {
                let eval = |mu: &DVector<f64>, a: &DMatrix<f64>| match kind {
                    LossKind::LeastSquares => least_squares_at(mu, a, &gram),
                    LossKind::LogLikelihood => neg_log_likelihood_at(mu, a, &cache),
                };
                let g = eval(&mu, &a);
                let grad: Vec<f64> = g.grad_mu.iter().chain(g.grad_a.iter()).copied().collect();
                let scale = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for i in 0..grad.len() {
                    let shift = |h: f64| {
                        let (mut m2, mut a2) = (mu.clone(), a.clone());
                        if i < d {
                            m2[i] += h;
                        } else {
                            a2[i - d] += h;
                        }
                        eval(&m2, &a2).value
                    };
                    let h = 1e-6;
                    let fd = (shift(h) - shift(-h)) / (2.0 * h);
                    worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(1e-3 * scale).max(1e-12));
                }
            }
        }
    }
    within(10.0, start, format!("max relative gap {worst:.2e} (tol 1e-5)"), worst < 1e-5)
}

fn gram_quadrature() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let (params, data) = instance(100 + seed, 2, 60);
        let decays = params.decays();
        let gram = precompute_gram(&data, decays).unwrap();
        let t = data.horizon();
        for j in 0..2 {
            for k in 0..2 {
                let psi = quad(&data, &|s| naive_h(&data, decays, j, k, s)) / t;
                worst = worst.max(rel(gram.psi[(j, k)], psi));
                for l in 0..2 {
                    let g = quad(&data, &|s| naive_h(&data, decays, j, k, s) * naive_h(&data, decays, j, l, s)) / t;
                    worst = worst.max(rel(gram.gram[j][(k, l)], g));
                }
            }
        }
    }
    within(30.0, start, format!("max relative gap {worst:.2e} (tol 1e-8)"), worst < 1e-8)
}

fn nuclear(m: &DMatrix<f64>) -> f64 {
    m.singular_values().sum()
}

fn prox_oracles() -> Outcome {
    let mut r = stream_rng(3, 3);
    let mut worst = f64::INFINITY;
    for _ in 0..20 {
        let v = DMatrix::from_fn(4, 4, |_, _| r.random_range(-1.0..1.0));
        let w = DMatrix::from_fn(4, 4, |_, _| r.random_range(0.0..0.5));
        let step = r.random_range(0.1..2.0);
        let tau = r.random_range(0.05..1.5);
        let p1 = prox_l1_nonneg(&v, &w, step).unwrap();
        let p2 = prox_trace(&v, tau).unwrap();
        let g1 = |x: &DMatrix<f64>| step * w.component_mul(&x.abs()).sum();
        let g2 = |x: &DMatrix<f64>| tau * nuclear(x);
        // Half the comparison points are drawn near the prox point, where the inequality is tight.
        for i in 0..100 {
            let radius = if i % 2 == 0 { 1e-3 } else { 1.0 };
            let y = DMatrix::from_fn(4, 4, |a, b| (p1[(a, b)] + radius * r.random_range(-1.0..1.0)).max(0.0));
            worst = worst.min(g1(&y) - g1(&p1) - (&v - &p1).dot(&(&y - &p1)));
            let y = DMatrix::from_fn(4, 4, |a, b| p2[(a, b)] + radius * r.random_range(-1.0..1.0));
            worst = worst.min(g2(&y) - g2(&p2) - (&v - &p2).dot(&(&y - &p2)));
        }
    }
    let diag = prox_trace(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])), 1.0).unwrap();
    let exact = diag == DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
    check(worst >= -1e-8 && exact, format!("min optimality slack {worst:.2e}; diag(3,1) -> diag(2,0) exact: {exact}"))
}

fn simulator() -> Outcome {
    let start = Instant::now();
    let mu = [0.5, 1.0, 2.0];
    let horizon = 50.0;
    let params = ModelParams::with_uniform_decay(DVector::from_row_slice(&mu), DMatrix::zeros(3, 3), 1.0).unwrap();
    let config = SimConfig::new(params, horizon, 99);
    let runs: Vec<Vec<usize>> = (0..500).map(|rep| simulate_stream(&config, rep).unwrap().counts()).collect();
    let mut ok = true;
    let mut worst_z = 0.0f64;
    for (j, &m) in mu.iter().enumerate() {
        let counts: Vec<f64> = runs.iter().map(|c| c[j] as f64).collect();
        let (mean, var) = mean_var(&counts);
        let lambda = m * horizon;
        let z_mean = (mean - lambda).abs() / (lambda / 500.0).sqrt();
        let z_var = (var - lambda).abs() / ((lambda + 2.0 * lambda * lambda) / 500.0).sqrt();
        worst_z = worst_z.max(z_mean).max(z_var);
        ok &= z_mean < 3.0 && z_var < 3.0;
    }
    let params = ModelParams::with_uniform_decay(DVector::from_element(1, 0.5), DMatrix::from_element(1, 1, 0.5), 1.0).unwrap();
    let config = SimConfig::new(params, 2000.0, 5);
    let rates: Vec<f64> = (0..20).map(|rep| simulate_stream(&config, rep).unwrap().total_events() as f64 / 2000.0).collect();
    let (rate, var) = mean_var(&rates);
    let z_rate = (rate - 1.0).abs() / (var / 20.0).sqrt();
    ok &= z_rate < 3.0;
    within(60.0, start, format!("Poisson max |z| {worst_z:.2}; Hawkes rate {rate:.4} (|z| {z_rate:.2})"), ok)
}

fn benchmark_event_rate() -> Outcome {
    let totals: Vec<f64> = (0..5)
        .map(|seed| {
            let sc = generate_scenario(&ScenarioConfig::community(seed)).unwrap();
            simulate(&SimConfig::new(sc.params, 1000.0, seed)).unwrap().total_events() as f64
        })
        .collect();
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    check((7000.0..=13000.0).contains(&mean), format!("mean total events {mean:.0} over 5 seeds (range [7000, 13000])"))
}

fn bound_check(pointwise: bool) -> Outcome {
    let start = Instant::now();
    let (d, x, limit) = if pointwise { (3, 8.0, 300.0) } else { (5, 6.0, 600.0) };
    let scenario = BoundScenario::standard(d, 200.0).unwrap();
    let report = if pointwise {
        check_pointwise_bound(&scenario, x, 2000, 11).unwrap()
    } else {
        check_opnorm_bound(&scenario, x, 2000, 12).unwrap()
    };
    let detail = format!(
        "{} violations / 2000 (rate {:.4}, 99% CI [{:.4}, {:.4}]) vs stated {:.4}",
        report.violation_count, report.empirical_rate, report.wilson_ci.0, report.wilson_ci.1, report.stated_bound
    );
    within(limit, start, detail, report.consistent())
}

fn figure_reproduction() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig::scaled(30, vec![250.0, 500.0, 1000.0], 10, 0);
    let rows = run_experiment(&config, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let summary = hawkes_core::aggregate(&rows);
    let get = |p: Procedure, t: f64| summary.iter().find(|a| a.procedure == p && a.horizon == t).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for &t in &config.horizons {
        for (weighted, plain) in [(Procedure::WL1, Procedure::L1), (Procedure::WL1Nuclear, Procedure::L1Nuclear)] {
            let (w, p) = (get(weighted, t), get(plain, t));
            let better = w.mean_auc >= p.mean_auc && w.mean_error <= p.mean_error;
            ok &= better;
            parts.push(format!(
                "T={t} {weighted} auc {:.3} err {:.3} vs {plain} auc {:.3} err {:.3}{}",
                w.mean_auc,
                w.mean_error,
                p.mean_auc,
                p.mean_error,
                if better { "" } else { " (ordering fails)" }
            ));
        }
    }
    within(1800.0, start, parts.join("; "), ok)
}

fn solver_sanity() -> Outcome {
    let truth = ModelParams::with_uniform_decay(
        DVector::from_vec(vec![0.5, 0.5]),
        DMatrix::from_row_slice(2, 2, &[0.3, 0.2, 0.1, 0.4]),
        1.0,
    )
    .unwrap();
    let theta = Theta::from(&truth);
    let mut decrease_ok = true;
    let mut errors: Vec<f64> = (0..5)
        .map(|seed| {
            let data = simulate(&SimConfig::new(truth.clone(), 5000.0, seed)).unwrap();
            let res = hawkes_core::fit(&FitConfig::new(LossKind::LeastSquares, PenaltySpec::none(2)), &data, truth.decays()).unwrap();
            decrease_ok &= res.decrease_log.iter().all(|c| c.holds(1e-12));
            hawkes_core::relative_error(&res.theta_hat, &theta).unwrap().sqrt()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    check(
        errors[2] < 0.15 && decrease_ok,
        format!("median relative l2 error {:.4} (tol 0.15); sufficient decrease on every accepted step: {decrease_ok}", errors[2]),
    )
}

// ---------------------------------------------------------------- determinism

fn hawkes(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hawkes")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("hawkes {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

/// File name -> contents for every file under `dir`.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn run_all_commands(root: &Path, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let _ = std::fs::remove_dir_all(root);
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let (sim, fit, w) = (p("sim"), p("fit"), p("weights"));
    let events = root.join("sim/events.json").to_string_lossy().into_owned();
    let mut outputs = Vec::new();
    let mut record = |name: &str, bytes: Vec<u8>| outputs.push((format!("stdout:{name}"), bytes));
    record("simulate", hawkes(&["simulate", "--d", "8", "--T", "300", "--seed", "4", "--out", &sim])?);
    record("fit", hawkes(&["fit", "--events", &events, "--procedure", "wL1Nuclear", "--out", &fit])?);
    record("eval", hawkes(&["eval", "--estimate", &fit, "--truth", &sim])?);
    record("xval", hawkes(&["xval", "--events", &events, "--procedure", "wL1", "--c1", "0.5,2", "--c2", "1,4"])?);
    record("weights", hawkes(&["weights", "--events", &events, "--out", &w])?);
    record("check-bounds", hawkes(&["--threads", threads, "check-bounds", "--reps", "200", "--seed", "9"])?);
    let exp = p("exp");
    let exp_args = [
        "--threads", threads, "experiment", "--d", "6", "--horizons", "80,160", "--reps", "4", "--seed", "2",
        "--c1", "1", "--c2", "1,4", "--tau", "0.01", "--out", &exp,
    ];
    record("experiment", hawkes(&exp_args)?);
    for dir in ["sim", "fit", "weights", "exp"] {
        for (name, bytes) in snapshot(&root.join(dir)) {
            outputs.push((format!("{dir}/{name}"), bytes));
        }
    }
    Ok(outputs)
}

fn determinism() -> Outcome {
    let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    let first = run_all_commands(&base.join("a"), "2")?;
    let second = run_all_commands(&base.join("b"), "2")?;
    let serial = run_all_commands(&base.join("c"), "1")?;
    // Paths differ between runs only in the root, which never appears in outputs.
    let differing: Vec<&str> = first
        .iter()
        .zip(second.iter())
        .zip(serial.iter())
        .filter(|((a, b), c)| a != b || a != c)
        .map(|((a, _), _)| a.0.as_str())
        .collect();
    let same_shape = first.len() == second.len() && first.len() == serial.len();
    check(
        same_shape && differing.is_empty(),
        format!("{} outputs compared across 2 parallel runs and 1 serial run; differing: {differing:?}", first.len()),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 gradient correctness", gradients),
        ("2 closed-form Gram vs quadrature", gram_quadrature),
        ("3 prox oracles", prox_oracles),
        ("4 simulator fidelity", simulator),
        ("5 benchmark event rate (d=100, T=1000)", benchmark_event_rate),
        ("6 pointwise bound (d=3, T=200, x=8)", || bound_check(true)),
        ("7 operator-norm bound (d=5, T=200, x=6)", || bound_check(false)),
        ("8 scaled benchmark ordering (d=30)", figure_reproduction),
        ("9 solver sanity (NoPen LS, d=2, T=5000)", solver_sanity),
        ("10 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
