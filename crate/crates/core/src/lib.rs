//! Multivariate Hawkes processes with exponential kernels: simulation,
//! sparse + low-rank estimation of the excitation matrix with data-driven
//! penalty weights, and Monte Carlo checks of the matching martingale
//! deviation bounds.

pub mod bounds;
pub mod crossval;
pub mod error;
pub mod experiment;
pub mod features;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod penalty;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use features::{compute_stats, practical_weights, theoretical_weights, uniform_weights, FeatureStats, PenaltyWeights, WeightMode};
pub use loss::{least_squares, neg_log_likelihood, precompute_gram, LikelihoodCache, LossValueGrad, PrecomputedGram};
pub use model::{EventData, IntensityTrace, ModelParams};
pub use penalty::{pen_value, prox_l1_nonneg, prox_trace, PenaltySpec};
pub use simulate::{generate_scenario, simulate, Scenario, ScenarioConfig, SimConfig};
pub use solver::{fit, fit_fista, fit_prisma, FitConfig, FitResult, LossKind, SolverKind, Theta};
pub use bounds::{check_opnorm_bound, check_pointwise_bound, compute_noise, BoundKind, BoundReport, BoundScenario, NoiseMatrices};
pub use crossval::{cross_validate, CvGrid, CvOutcome, CvPoint, Procedure};
pub use experiment::{aggregate, run_experiment, ExperimentConfig, ExperimentRow};
pub use metrics::{auc_score, relative_error, EvalReport};
