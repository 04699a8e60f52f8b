//! Python module `hawkes`: simulation, penalized fitting and evaluation of
//! multivariate Hawkes processes. Matrices cross the boundary as lists of rows.

use hawkes_core::crossval::fit_procedure;
use hawkes_core::metrics::evaluate as evaluate_theta;
use hawkes_core::{
    check_opnorm_bound, check_pointwise_bound, compute_stats, cross_validate, generate_scenario, practical_weights,
    theoretical_weights, uniform_weights, BoundScenario, CvGrid, CvPoint, FitConfig, LossKind, PenaltySpec, Procedure,
    ScenarioConfig, SimConfig, Theta,
};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

pub fn to_py_err(e: hawkes_core::Error) -> PyErr {
    use hawkes_core::Error::*;
    match e {
        Numerical(_) | NonFiniteIntensity(_) | MaxEventsExceeded(_) => PyRuntimeError::new_err(e.to_string()),
        Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Rows = Vec<Vec<f64>>;

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn decay_matrix(d: usize, alpha: f64, decays: Option<Rows>) -> PyResult<DMatrix<f64>> {
    match decays {
        Some(rows) => matrix_from_rows(&rows),
        None => Ok(DMatrix::from_element(d, d, alpha)),
    }
}

fn parse_loss(s: &str) -> PyResult<LossKind> {
    match s.to_ascii_lowercase().as_str() {
        "ls" | "least-squares" => Ok(LossKind::LeastSquares),
        "ll" | "log-likelihood" => Ok(LossKind::LogLikelihood),
        _ => Err(PyValueError::new_err(format!("unknown loss {s:?}"))),
    }
}

fn parse_procedure(s: &str) -> PyResult<Procedure> {
    s.parse().map_err(to_py_err)
}

/// Serializable value converted through the `json` module.
fn to_python<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Baselines `mu`, excitation matrix `adjacency` and exponential decay rates.
#[pyclass(name = "ModelParams", module = "hawkes", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModelParams {
    pub inner: hawkes_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (mu, adjacency, alpha = 1.0, decays = None))]
    fn new(mu: Vec<f64>, adjacency: Rows, alpha: f64, decays: Option<Rows>) -> PyResult<Self> {
        let d = mu.len();
        let a = matrix_from_rows(&adjacency)?;
        let decays = decay_matrix(d, alpha, decays)?;
        let inner = hawkes_core::ModelParams::new(DVector::from_vec(mu), a, decays).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().iter().copied().collect()
    }

    #[getter]
    fn adjacency(&self) -> Rows {
        matrix_to_rows(self.inner.adjacency())
    }

    #[getter]
    fn decays(&self) -> Rows {
        matrix_to_rows(self.inner.decays())
    }

    fn spectral_radius(&self) -> f64 {
        self.inner.spectral_radius()
    }

    /// Left-limit intensity of `node` at time `t` given the events.
    fn intensity_at(&self, events: &PyEventData, node: usize, t: f64) -> PyResult<f64> {
        self.inner.intensity_at(&events.inner, node, t).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(d={}, spectral_radius={:.4})", self.inner.dim(), self.inner.spectral_radius())
    }
}

/// Event times per node on `[0, horizon]`.
#[pyclass(name = "EventData", module = "hawkes", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyEventData {
    pub inner: hawkes_core::EventData,
}

#[pymethods]
impl PyEventData {
    #[new]
    fn new(horizon: f64, events: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: hawkes_core::EventData::new(horizon, events).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: hawkes_core::io::events_from_json(text).map_err(to_py_err)? })
    }

    fn to_json(&self) -> String {
        hawkes_core::io::events_to_json(&self.inner)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    #[getter]
    fn events(&self) -> Vec<Vec<f64>> {
        self.inner.events().to_vec()
    }

    fn counts(&self) -> Vec<usize> {
        self.inner.counts()
    }

    fn total_events(&self) -> usize {
        self.inner.total_events()
    }

    /// Events strictly before `horizon`, observed on `[0, horizon]`.
    fn truncate(&self, horizon: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.truncate(horizon).map_err(to_py_err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.total_events()
    }

    fn __repr__(&self) -> String {
        format!("EventData(d={}, T={}, events={})", self.inner.dim(), self.inner.horizon(), self.inner.total_events())
    }
}

/// Result of a penalized fit.
#[pyclass(name = "FitResult", module = "hawkes", frozen, get_all)]
pub struct PyFitResult {
    pub mu: Vec<f64>,
    pub adjacency: Rows,
    pub objective_trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub best_objective: f64,
    pub solver: String,
}

#[pymethods]
impl PyFitResult {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(solver={}, iterations_used={}, converged={}, best_objective={})",
            self.solver, self.iterations_used, self.converged, self.best_objective
        )
    }
}

/// Ogata thinning on `[0, horizon]`; the same seed gives the same events.
#[pyfunction]
#[pyo3(signature = (params, horizon, seed = 0, max_events = None))]
fn simulate(params: &PyModelParams, horizon: f64, seed: u64, max_events: Option<usize>) -> PyResult<PyEventData> {
    let mut config = SimConfig::new(params.inner.clone(), horizon, seed);
    config.max_events = max_events;
    Ok(PyEventData { inner: hawkes_core::simulate(&config).map_err(to_py_err)? })
}

/// Overlapping-community benchmark rescaled to `d` nodes. Returns the
/// parameters and the true support as a boolean matrix.
#[pyfunction]
#[pyo3(signature = (d = 100, seed = 0))]
fn community_scenario(d: usize, seed: u64) -> PyResult<(PyModelParams, Vec<Vec<bool>>)> {
    let config = if d == 100 { ScenarioConfig::community(seed) } else { ScenarioConfig::scaled(d, seed) };
    let sc = generate_scenario(&config).map_err(to_py_err)?;
    let support = sc.support.row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok((PyModelParams { inner: sc.params }, support))
}

/// Fit one of NoPen, L1, wL1, L1Nuclear, wL1Nuclear at the given constants.
#[pyfunction]
#[pyo3(signature = (events, procedure = "wL1", c1 = 1.0, c2 = 1.0, tau = 0.01, loss = "log-likelihood", alpha = 1.0, decays = None, max_iter = 100))]
#[allow(clippy::too_many_arguments)]
fn fit(
    events: &PyEventData,
    procedure: &str,
    c1: f64,
    c2: f64,
    tau: f64,
    loss: &str,
    alpha: f64,
    decays: Option<Rows>,
    max_iter: usize,
) -> PyResult<PyFitResult> {
    let data = &events.inner;
    let decays = decay_matrix(data.dim(), alpha, decays)?;
    let mut base = FitConfig::new(parse_loss(loss)?, PenaltySpec::none(data.dim()));
    base.max_iter = max_iter;
    let res = fit_procedure(parse_procedure(procedure)?, CvPoint { c1, c2, tau }, data, &decays, &base).map_err(to_py_err)?;
    Ok(PyFitResult {
        mu: res.theta_hat.mu.iter().copied().collect(),
        adjacency: matrix_to_rows(&res.theta_hat.a),
        objective_trace: res.objective_trace,
        iterations_used: res.iterations_used,
        converged: res.converged,
        best_objective: res.best_objective,
        solver: format!("{:?}", res.solver).to_lowercase(),
    })
}

/// Half-split cross-validation over the grid; returns `{procedure, best, scores}`.
#[pyfunction]
#[pyo3(signature = (events, procedure, c1, c2, tau = vec![0.0], loss = "log-likelihood", alpha = 1.0, max_iter = 100))]
#[allow(clippy::too_many_arguments)]
fn cross_validation(
    py: Python<'_>,
    events: &PyEventData,
    procedure: &str,
    c1: Vec<f64>,
    c2: Vec<f64>,
    tau: Vec<f64>,
    loss: &str,
    alpha: f64,
    max_iter: usize,
) -> PyResult<Py<PyAny>> {
    let data = &events.inner;
    let decays = DMatrix::from_element(data.dim(), data.dim(), alpha);
    let mut base = FitConfig::new(parse_loss(loss)?, PenaltySpec::none(data.dim()));
    base.max_iter = max_iter;
    let grid = CvGrid { c1, c2, tau };
    let outcome = cross_validate(data, &decays, parse_procedure(procedure)?, &grid, &base).map_err(to_py_err)?;
    to_python(py, &outcome)
}

/// Data-driven penalty weights: returns `(w, W, tau)`.
#[pyfunction]
#[pyo3(signature = (events, mode = "theoretical", x = None, c1 = 1.0, c2 = 1.0, alpha = 1.0))]
fn weights(events: &PyEventData, mode: &str, x: Option<f64>, c1: f64, c2: f64, alpha: f64) -> PyResult<(Vec<f64>, Rows, f64)> {
    let data = &events.inner;
    let decays = DMatrix::from_element(data.dim(), data.dim(), alpha);
    let stats = compute_stats(data, &decays).map_err(to_py_err)?;
    let w = match mode.to_ascii_lowercase().as_str() {
        "theoretical" => theoretical_weights(&stats, x.unwrap_or((data.dim() as f64).ln().max(1.0))),
        "practical" => practical_weights(&stats, c1, c2),
        "uniform" => uniform_weights(&stats, c1, c2),
        _ => return Err(PyValueError::new_err(format!("unknown weight mode {mode:?}"))),
    }
    .map_err(to_py_err)?;
    Ok((w.w.iter().copied().collect(), matrix_to_rows(&w.big_w), w.tau))
}

/// Relative squared l2 error and AUC of an estimate against the truth.
#[pyfunction]
#[pyo3(signature = (mu_hat, a_hat, mu, a, threshold = 0.0))]
fn evaluate(py: Python<'_>, mu_hat: Vec<f64>, a_hat: Rows, mu: Vec<f64>, a: Rows, threshold: f64) -> PyResult<Py<PyAny>> {
    let estimate = Theta { mu: DVector::from_vec(mu_hat), a: matrix_from_rows(&a_hat)? };
    let truth = Theta { mu: DVector::from_vec(mu), a: matrix_from_rows(&a)? };
    to_python(py, &evaluate_theta(&estimate, &truth, threshold).map_err(to_py_err)?)
}

/// Monte Carlo check of a martingale deviation bound (`pointwise` or `operator-norm`).
#[pyfunction]
#[pyo3(signature = (kind = "pointwise", d = 3, horizon = 200.0, x = 8.0, reps = 2000, seed = 0))]
fn check_bound(py: Python<'_>, kind: &str, d: usize, horizon: f64, x: f64, reps: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let scenario = BoundScenario::standard(d, horizon).map_err(to_py_err)?;
    let report = match kind {
        "pointwise" => check_pointwise_bound(&scenario, x, reps, seed),
        "operator-norm" => check_opnorm_bound(&scenario, x, reps, seed),
        _ => return Err(PyValueError::new_err(format!("unknown bound {kind:?}"))),
    }
    .map_err(to_py_err)?;
    let consistent = report.consistent();
    let out = to_python(py, &report)?;
    out.bind(py).set_item("consistent", consistent)?;
    Ok(out)
}

#[pymodule]
fn hawkes(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyEventData>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(community_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validation, m)?)?;
    m.add_function(wrap_pyfunction!(weights, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(check_bound, m)?)?;
    Ok(())
}
