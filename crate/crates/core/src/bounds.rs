//! Monte Carlo validation of the data-driven deviation bounds for the
//! noise matrix
//!
//! `Z_{j,k}(T) = int_0^T H_{j,k}(s-) dM_j(s)`,  `dM_j = dN_j - lambda_j ds`,
//!
//! computed under the true parameters. Entrywise check: probability
//! `30.55 e^{-x}`; operator-norm check: probability `84.9 e^{-x}`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compute_stats, ell_opnorm, ell_pair, FeatureStats};
use crate::loss::precompute_gram;
use crate::model::{operator_norm, EventData, ModelParams};
use crate::simulate::{simulate_stream, SimConfig};

/// Two-sided 99% normal quantile.
const Z_99: f64 = 2.5758293035489004;

#[derive(Debug, Clone)]
pub struct NoiseMatrices {
    pub z: DMatrix<f64>,
    /// Compensated counts `N_j(T) - int_0^T lambda_j`.
    pub m_t: DVector<f64>,
    pub opnorm_z: f64,
}

/// Exact `Z(T)` and `M(T)`; the compensator integrals come from the
/// closed-form Gram blocks, since `int H_{j,k} lambda_j = T (mu_j psi_{j,k} + (G_j a_j)_k)`.
pub fn compute_noise(params: &ModelParams, data: &EventData) -> Result<NoiseMatrices> {
    params.check_data(data)?;
    let gram = precompute_gram(data, params.decays())?;
    let d = params.dim();
    let t = data.horizon();
    let mu = params.mu();
    let a = params.adjacency();
    let mut z = DMatrix::zeros(d, d);
    let mut m_t = DVector::zeros(d);
    for j in 0..d {
        let row = a.row(j).transpose();
        let psi = gram.psi.row(j).transpose();
        let compensator = &psi * mu[j] + &gram.gram[j] * &row;
        let zj = (gram.s.row(j).transpose() - compensator) * t;
        z.set_row(j, &zj.transpose());
        m_t[j] = gram.counts[j] as f64 - t * (mu[j] + row.dot(&psi));
    }
    let opnorm_z = operator_norm(&z);
    Ok(NoiseMatrices { z, m_t, opnorm_z })
}

/// Right-hand side of the entrywise bound on `Z_{j,k}(T) / T`.
pub fn pointwise_rhs(stats: &FeatureStats, x: f64) -> DMatrix<f64> {
    let d = stats.dim();
    let t = stats.horizon;
    let log_d = (d as f64).ln();
    DMatrix::from_fn(d, d, |j, k| {
        let b = stats.b[(j, k)];
        let v = stats.vhat[(j, k)];
        let level = x + 2.0 * log_d + ell_pair(v, b, x, t);
        2.0 * std::f64::consts::SQRT_2 * (level * v / t).sqrt() + 9.31 * level * b / t
    })
}

/// Right-hand side of the bound on `||Z(T)||_op / T`.
pub fn opnorm_rhs(stats: &FeatureStats, x: f64) -> f64 {
    let d = stats.dim() as f64;
    let t = stats.horizon;
    let level = x + d.ln() + ell_opnorm(stats, x);
    let variance = stats.vhat1_opnorm().max(stats.vhat2_opnorm());
    4.0 * (level * variance / t).sqrt() + level * (10.34 + 2.65 * stats.sup_h_2inf) / t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Pointwise,
    OperatorNorm,
}

impl BoundKind {
    /// Failure probability allowed at confidence level `x`.
    pub fn stated_bound(self, x: f64) -> f64 {
        let c = match self {
            BoundKind::Pointwise => 30.55,
            BoundKind::OperatorNorm => 84.9,
        };
        (c * (-x).exp()).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem_id: BoundKind,
    pub x: f64,
    pub d: usize,
    pub horizon: f64,
    pub n_reps: usize,
    /// Replications where the stated one-sided bound fails.
    pub violation_count: usize,
    /// Same check applied to `-Z` (irrelevant for the operator norm, which is sign-free).
    pub violation_count_negated: usize,
    pub stated_bound: f64,
    pub empirical_rate: f64,
    pub wilson_ci: (f64, f64),
    /// Largest observed ratio of left- to right-hand side.
    pub max_ratio: f64,
}

impl BoundReport {
    /// Whether the data are compatible with the stated probability at 99%.
    pub fn consistent(&self) -> bool {
        self.wilson_ci.0 <= self.stated_bound
    }
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// True parameters and observation window for the bound checks.
#[derive(Debug, Clone)]
pub struct BoundScenario {
    pub params: ModelParams,
    pub horizon: f64,
}

impl BoundScenario {
    /// `mu_j = 0.5`, `A = 0.5/d + 0.2 I`, `alpha = 1`: branching radius 0.7.
    pub fn standard(d: usize, horizon: f64) -> Result<Self> {
        let mut a = DMatrix::from_element(d, d, 0.5 / d as f64);
        for j in 0..d {
            a[(j, j)] += 0.2;
        }
        let params = ModelParams::with_uniform_decay(DVector::from_element(d, 0.5), a, 1.0)?;
        Ok(Self { params, horizon })
    }

    /// Homogeneous Poisson process with rate `mu` on every node.
    pub fn poisson(d: usize, mu: f64, horizon: f64) -> Result<Self> {
        let params = ModelParams::with_uniform_decay(DVector::from_element(d, mu), DMatrix::zeros(d, d), 1.0)?;
        Ok(Self { params, horizon })
    }
}

struct RepOutcome {
    violated: bool,
    violated_negated: bool,
    ratio: f64,
}

fn run_reps<F>(scenario: &BoundScenario, n_reps: usize, seed: u64, per_rep: F) -> Result<Vec<RepOutcome>>
where
    F: Fn(&NoiseMatrices, &FeatureStats) -> RepOutcome + Sync,
{
    let config = SimConfig::new(scenario.params.clone(), scenario.horizon, seed);
    (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let data = simulate_stream(&config, rep)?;
            let noise = compute_noise(&scenario.params, &data)?;
            let stats = compute_stats(&data, scenario.params.decays())?;
            Ok(per_rep(&noise, &stats))
        })
        .collect()
}

fn validate(x: f64, n_reps: usize) -> Result<()> {
    if !(x > 0.0) {
        return Err(Error::Config(format!("x must be > 0, got {x}")));
    }
    if n_reps == 0 {
        return Err(Error::Config("n_reps must be positive".into()));
    }
    Ok(())
}

fn report(kind: BoundKind, scenario: &BoundScenario, x: f64, outcomes: &[RepOutcome]) -> BoundReport {
    let n = outcomes.len();
    let violation_count = outcomes.iter().filter(|o| o.violated).count();
    let violation_count_negated = outcomes.iter().filter(|o| o.violated_negated).count();
    BoundReport {
        theorem_id: kind,
        x,
        d: scenario.params.dim(),
        horizon: scenario.horizon,
        n_reps: n,
        violation_count,
        violation_count_negated,
        stated_bound: kind.stated_bound(x),
        empirical_rate: violation_count as f64 / n as f64,
        wilson_ci: wilson_interval(violation_count, n, Z_99),
        max_ratio: outcomes.iter().map(|o| o.ratio).fold(0.0, f64::max),
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Entrywise bound: a replication violates it if any `(j, k)` does.
pub fn check_pointwise_bound(scenario: &BoundScenario, x: f64, n_reps: usize, seed: u64) -> Result<BoundReport> {
    validate(x, n_reps)?;
    let t = scenario.horizon;
    let outcomes = run_reps(scenario, n_reps, seed, |noise, stats| {
        let rhs = pointwise_rhs(stats, x);
        let mut violated = false;
        let mut violated_negated = false;
        let mut worst: f64 = 0.0;
        for (z, r) in noise.z.iter().zip(rhs.iter()) {
            let lhs = z / t;
            violated |= lhs > *r;
            violated_negated |= -lhs > *r;
            worst = worst.max(ratio(lhs.abs(), *r));
        }
        RepOutcome { violated, violated_negated, ratio: worst }
    })?;
    Ok(report(BoundKind::Pointwise, scenario, x, &outcomes))
}

/// Operator-norm bound on `||Z(T)||_op / T`.
pub fn check_opnorm_bound(scenario: &BoundScenario, x: f64, n_reps: usize, seed: u64) -> Result<BoundReport> {
    validate(x, n_reps)?;
    let t = scenario.horizon;
    let outcomes = run_reps(scenario, n_reps, seed, |noise, stats| {
        let lhs = noise.opnorm_z / t;
        let rhs = opnorm_rhs(stats, x);
        let violated = lhs > rhs;
        RepOutcome { violated, violated_negated: violated, ratio: ratio(lhs, rhs) }
    })?;
    Ok(report(BoundKind::OperatorNorm, scenario, x, &outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn no_events_noise() {
        let p = ModelParams::with_uniform_decay(DVector::from_element(2, 0.3), DMatrix::from_element(2, 2, 0.1), 1.0)
            .unwrap();
        let data = EventData::empty(2, 10.0).unwrap();
        let n = compute_noise(&p, &data).unwrap();
        assert_eq!(n.z, DMatrix::zeros(2, 2));
        assert_relative_eq!(n.m_t[0], -3.0, epsilon = 1e-12);
        assert_eq!(n.opnorm_z, 0.0);
    }

    #[test]
    fn poisson_compensated_count() {
        let p = ModelParams::with_uniform_decay(DVector::from_element(1, 2.0), DMatrix::zeros(1, 1), 1.0).unwrap();
        let data = EventData::new(5.0, vec![vec![1.0, 2.0, 4.5]]).unwrap();
        let n = compute_noise(&p, &data).unwrap();
        assert_relative_eq!(n.m_t[0], 3.0 - 10.0, epsilon = 1e-12);
    }

    #[test]
    fn wilson_interval_basics() {
        let (lo, hi) = wilson_interval(0, 100, Z_99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.07);
        let (lo, hi) = wilson_interval(50, 100, Z_99);
        assert!(lo < 0.5 && hi > 0.5);
        assert_relative_eq!(lo + hi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stated_bounds() {
        assert_relative_eq!(BoundKind::Pointwise.stated_bound(8.0), 30.55 * (-8.0f64).exp());
        assert_relative_eq!(BoundKind::Pointwise.stated_bound(8.0), 0.01025, epsilon = 1e-5);
        assert_relative_eq!(BoundKind::OperatorNorm.stated_bound(6.0), 0.2104, epsilon = 1e-4);
        assert_eq!(BoundKind::OperatorNorm.stated_bound(0.1), 1.0);
    }

    #[test]
    fn small_runs_are_deterministic() {
        let sc = BoundScenario::standard(2, 30.0).unwrap();
        let a = check_pointwise_bound(&sc, 3.0, 20, 9).unwrap();
        let b = check_pointwise_bound(&sc, 3.0, 20, 9).unwrap();
        assert_eq!(a, b);
        assert!(check_pointwise_bound(&sc, 0.0, 20, 9).is_err());
    }
}
