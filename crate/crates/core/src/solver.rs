//! Penalized empirical-risk minimization.
//!
//! * FISTA with backtracking and objective-increase restarts, for a single
//!   nonsmooth term on `A` (l1 + nonnegativity, or trace norm + nonnegativity).
//! * PRISMA-style iterations when `A` carries both an l1 and a trace-norm
//!   term: the trace norm is replaced by its Moreau envelope with parameter
//!   `beta_k = beta_0 / k^p`, and the l1 + nonnegativity prox is taken exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{least_squares_at, neg_log_likelihood_at, LikelihoodCache, LossValueGrad, PrecomputedGram};
use crate::model::{EventData, ModelParams};
use crate::penalty::{pen_value, prox_l1_nonneg, prox_trace_nonneg, smoothed_trace, PenaltySpec};

/// A point `(mu, A)` of the optimization domain (or of the momentum path).
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub mu: DVector<f64>,
    pub a: DMatrix<f64>,
}

impl Theta {
    pub fn zeros(d: usize) -> Self {
        Self { mu: DVector::zeros(d), a: DMatrix::zeros(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn axpy(&self, alpha: f64, other: &Theta) -> Theta {
        Theta { mu: &self.mu + &other.mu * alpha, a: &self.a + &other.a * alpha }
    }

    fn sub(&self, other: &Theta) -> Theta {
        Theta { mu: &self.mu - &other.mu, a: &self.a - &other.a }
    }

    fn dot(&self, other: &Theta) -> f64 {
        self.mu.dot(&other.mu) + self.a.dot(&other.a)
    }

    fn norm_squared(&self) -> f64 {
        self.mu.norm_squared() + self.a.norm_squared()
    }

    fn project_nonneg(&self) -> Theta {
        Theta { mu: self.mu.map(|v| v.max(0.0)), a: self.a.map(|v| v.max(0.0)) }
    }

    /// Attach decays to obtain model parameters.
    pub fn params(&self, decays: &DMatrix<f64>) -> Result<ModelParams> {
        ModelParams::new(self.mu.clone(), self.a.clone(), decays.clone())
    }
}

impl From<&ModelParams> for Theta {
    fn from(p: &ModelParams) -> Self {
        Self { mu: p.mu().clone(), a: p.adjacency().clone() }
    }
}

/// Smooth goodness-of-fit term seen by the solvers.
pub trait SmoothLoss: Sync {
    fn dim(&self) -> usize;

    /// Value and gradient; `value = +inf` marks a point outside the domain.
    fn evaluate(&self, theta: &Theta) -> LossValueGrad;

    fn value(&self, theta: &Theta) -> f64 {
        self.evaluate(theta).value
    }

    /// A feasible starting point for `Init::Zero`.
    fn default_start(&self) -> Theta {
        Theta::zeros(self.dim())
    }
}

impl SmoothLoss for PrecomputedGram {
    fn dim(&self) -> usize {
        PrecomputedGram::dim(self)
    }

    fn evaluate(&self, theta: &Theta) -> LossValueGrad {
        least_squares_at(&theta.mu, &theta.a, self)
    }
}

impl SmoothLoss for LikelihoodCache {
    fn dim(&self) -> usize {
        LikelihoodCache::dim(self)
    }

    fn evaluate(&self, theta: &Theta) -> LossValueGrad {
        neg_log_likelihood_at(&theta.mu, &theta.a, self)
    }

    /// `mu_0 = N_j / T`, `A_0 = 0`: inside the likelihood domain.
    fn default_start(&self) -> Theta {
        let d = self.dim();
        let mu = DVector::from_iterator(d, self.counts.iter().map(|&n| n as f64 / self.horizon));
        Theta { mu, a: DMatrix::zeros(d, d) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    LeastSquares,
    LogLikelihood,
}

/// Precomputed loss oracle for either goodness-of-fit term.
#[derive(Debug, Clone)]
pub enum Objective {
    LeastSquares(PrecomputedGram),
    LogLikelihood(LikelihoodCache),
}

impl Objective {
    pub fn build(kind: LossKind, data: &EventData, decays: &DMatrix<f64>) -> Result<Self> {
        Ok(match kind {
            LossKind::LeastSquares => Objective::LeastSquares(crate::loss::precompute_gram(data, decays)?),
            LossKind::LogLikelihood => Objective::LogLikelihood(LikelihoodCache::new(data, decays)?),
        })
    }

    fn inner(&self) -> &dyn SmoothLoss {
        match self {
            Objective::LeastSquares(g) => g,
            Objective::LogLikelihood(c) => c,
        }
    }
}

impl SmoothLoss for Objective {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn evaluate(&self, theta: &Theta) -> LossValueGrad {
        self.inner().evaluate(theta)
    }

    fn default_start(&self) -> Theta {
        self.inner().default_start()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    /// Step enlargement tried at the start of each iteration.
    pub growth: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { initial_step: 1.0, shrink: 0.5, growth: 2.0, max_backtracks: 60 }
    }
}

/// Smoothing parameters `beta_k = beta0 / k^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrismaSchedule {
    pub beta0: f64,
    pub exponent: f64,
}

impl Default for PrismaSchedule {
    fn default() -> Self {
        Self { beta0: 1.0, exponent: 1.0 }
    }
}

impl PrismaSchedule {
    fn beta(&self, k: usize) -> f64 {
        self.beta0 / (k as f64).powf(self.exponent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zero,
    Warm(Theta),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub loss_kind: LossKind,
    pub penalty: PenaltySpec,
    pub max_iter: usize,
    pub tol: f64,
    pub linesearch: LineSearch,
    pub init: Init,
    pub prisma: PrismaSchedule,
}

impl FitConfig {
    pub fn new(loss_kind: LossKind, penalty: PenaltySpec) -> Self {
        Self {
            loss_kind,
            penalty,
            max_iter: 100,
            tol: 1e-7,
            linesearch: LineSearch::default(),
            init: Init::Zero,
            prisma: PrismaSchedule::default(),
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be > 0".into()));
        }
        let ls = &self.linesearch;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) || !(ls.initial_step > 0.0) || !(ls.growth >= 1.0) {
            return Err(Error::Config("invalid line-search parameters".into()));
        }
        if self.penalty.dim() != d {
            return Err(Error::Dimension(format!("penalty has d = {}, loss has d = {d}", self.penalty.dim())));
        }
        if let Init::Warm(t) = &self.init {
            if t.dim() != d {
                return Err(Error::Dimension("warm start has the wrong dimension".into()));
            }
        }
        if self.prisma.beta0 <= 0.0 {
            return Err(Error::Config("beta0 must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Fista,
    Prisma,
}

/// Loss value at an accepted point next to the quadratic model it had to stay under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreaseCheck {
    pub loss: f64,
    pub model: f64,
}

impl DecreaseCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.loss <= self.model + slack * (1.0 + self.model.abs())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: Theta,
    /// Penalized objective of the iterate after each iteration (index 0: start).
    pub objective_trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub final_step: f64,
    pub solver: SolverKind,
    pub decrease_log: Vec<DecreaseCheck>,
    pub best_objective: f64,
}

const DECREASE_SLACK: f64 = 1e-12;

fn prox_step(spec: &PenaltySpec, v: &Theta, step: f64, trace_in_prox: bool) -> Result<Theta> {
    let mu = prox_l1_nonneg(&v.mu, &spec.mu_weights(), step)?;
    let a = if trace_in_prox && spec.has_trace() {
        prox_trace_nonneg(&v.a, spec.tau() * step, 1e-12, 500)?
    } else {
        prox_l1_nonneg(&v.a, &spec.a_weights(), step)?
    };
    Ok(Theta { mu, a })
}

fn penalized(loss: &dyn SmoothLoss, spec: &PenaltySpec, theta: &Theta) -> Result<f64> {
    let f = loss.value(theta);
    if !f.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok(f + pen_value(&theta.mu, &theta.a, spec)?)
}

fn starting_point(config: &FitConfig, loss: &dyn SmoothLoss) -> Result<Theta> {
    let x = match &config.init {
        Init::Zero => loss.default_start(),
        Init::Warm(t) => t.project_nonneg(),
    };
    if !loss.value(&x).is_finite() {
        let fallback = loss.default_start();
        if !loss.value(&fallback).is_finite() {
            return Err(Error::Infeasible("no feasible starting point for the loss".into()));
        }
        return Ok(fallback);
    }
    Ok(x)
}

/// Smooth part used inside the iterations: the loss, plus the smoothed trace
/// norm when `beta` is set.
fn smooth_eval(loss: &dyn SmoothLoss, spec: &PenaltySpec, theta: &Theta, beta: Option<f64>) -> Result<(f64, Theta)> {
    let out = loss.evaluate(theta);
    if !out.value.is_finite() {
        return Ok((f64::INFINITY, Theta::zeros(theta.dim())));
    }
    let mut value = out.value;
    let mut grad = Theta { mu: out.grad_mu, a: out.grad_a };
    if let Some(beta) = beta {
        let (h, gh) = smoothed_trace(&theta.a, spec.tau(), beta)?;
        value += h;
        grad.a += gh;
    }
    Ok((value, grad))
}

/// Nonsmooth part handled by the prox at iteration level.
fn prox_part(spec: &PenaltySpec, theta: &Theta, trace_in_prox: bool) -> Result<f64> {
    let mut nonsmooth = spec.clone();
    if !trace_in_prox {
        nonsmooth.use_trace = false;
    }
    pen_value(&theta.mu, &theta.a, &nonsmooth)
}

/// Shared accelerated proximal-gradient loop.
fn accelerated(config: &FitConfig, loss: &dyn SmoothLoss, solver: SolverKind) -> Result<FitResult> {
    let d = loss.dim();
    config.validate(d)?;
    let spec = &config.penalty;
    let trace_in_prox = solver == SolverKind::Fista;
    let smoothing = |k: usize| -> Option<f64> {
        (solver == SolverKind::Prisma && spec.has_trace()).then(|| config.prisma.beta(k))
    };
    let ls = config.linesearch;

    let mut x = starting_point(config, loss)?;
    let mut x_obj = penalized(loss, spec, &x)?;
    let mut best = x.clone();
    let mut best_obj = x_obj;
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut step = ls.initial_step;
    let mut trace = vec![x_obj];
    let mut decrease_log = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=config.max_iter {
        iterations = k;
        let beta = smoothing(k);
        // Composite objective at the current iterate, same smoothing level.
        let (fx, _) = smooth_eval(loss, spec, &x, beta)?;
        let x_comp = fx + prox_part(spec, &x, trace_in_prox)?;

        let mut accepted: Option<(Theta, f64, f64)> = None;
        for attempt in 0..2 {
            let from_x = attempt == 1 || y == x;
            let base = if from_x { x.clone() } else { y.clone() };
            let (mut fy, mut gy) = smooth_eval(loss, spec, &base, beta)?;
            let base = if fy.is_finite() {
                base
            } else {
                let (fx2, gx2) = smooth_eval(loss, spec, &x, beta)?;
                fy = fx2;
                gy = gx2;
                x.clone()
            };
            let mut trial = step * ls.growth;
            let mut found = None;
            for _ in 0..=ls.max_backtracks {
                let z = prox_step(spec, &base.axpy(-trial, &gy), trial, trace_in_prox)?;
                let (fz, _) = smooth_eval(loss, spec, &z, beta)?;
                let diff = z.sub(&base);
                let model = fy + gy.dot(&diff) + diff.norm_squared() / (2.0 * trial);
                let check = DecreaseCheck { loss: fz, model };
                if fz.is_finite() && check.holds(DECREASE_SLACK) {
                    found = Some((z, fz, check));
                    break;
                }
                trial *= ls.shrink;
            }
            let Some((z, fz, check)) = found else {
                break;
            };
            let z_comp = fz + prox_part(spec, &z, trace_in_prox)?;
            if z_comp > x_comp && !from_x {
                // Momentum overshoot: restart from the current iterate.
                t = 1.0;
                y = x.clone();
                continue;
            }
            decrease_log.push(check);
            step = trial;
            accepted = Some((z, z_comp, trial));
            break;
        }

        let Some((z, _, _)) = accepted else {
            // Line search could not make progress from x.
            converged = true;
            break;
        };
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        y = z.axpy(momentum, &z.sub(&x));
        t = t_next;
        let moved = z.sub(&x).norm_squared().sqrt() / z.norm_squared().sqrt().max(1.0);
        x = z;

        let prev = x_obj;
        x_obj = penalized(loss, spec, &x)?;
        trace.push(x_obj);
        if !x_obj.is_finite() {
            return Err(Error::Numerical("objective became non-finite".into()));
        }
        if x_obj < best_obj {
            best_obj = x_obj;
            best = x.clone();
        }
        if (x_obj - prev).abs() / x_obj.abs().max(1.0) < config.tol && moved < config.tol.sqrt() {
            converged = true;
            break;
        }
    }

    let theta_hat = best.project_nonneg();
    let best_objective = penalized(loss, spec, &theta_hat)?;
    Ok(FitResult {
        theta_hat,
        objective_trace: trace,
        iterations_used: iterations,
        converged,
        final_step: step,
        solver,
        decrease_log,
        best_objective,
    })
}

/// FISTA for at most one nonsmooth term on `A`.
pub fn fit_fista(config: &FitConfig, loss: &dyn SmoothLoss) -> Result<FitResult> {
    if config.penalty.has_l1_a() && config.penalty.has_trace() {
        return Err(Error::Config("FISTA handles a single penalty on A; use PRISMA for l1 + trace".into()));
    }
    accelerated(config, loss, SolverKind::Fista)
}

/// PRISMA-style splitting for l1 + trace norm on `A`.
pub fn fit_prisma(config: &FitConfig, loss: &dyn SmoothLoss) -> Result<FitResult> {
    accelerated(config, loss, SolverKind::Prisma)
}

/// Builds the loss for `config.loss_kind` and dispatches on the penalty.
pub fn fit(config: &FitConfig, data: &EventData, decays: &DMatrix<f64>) -> Result<FitResult> {
    let objective = Objective::build(config.loss_kind, data, decays)?;
    fit_objective(config, &objective)
}

pub fn fit_objective(config: &FitConfig, loss: &dyn SmoothLoss) -> Result<FitResult> {
    if config.penalty.has_l1_a() && config.penalty.has_trace() {
        fit_prisma(config, loss)
    } else {
        fit_fista(config, loss)
    }
}
