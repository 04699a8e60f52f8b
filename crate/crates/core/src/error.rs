use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("invalid event data: {0}")]
    InvalidEvents(String),
    #[error("index {index} out of range for dimension {d}")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("time {t} outside observation window [0, {horizon}]")]
    TimeOutOfWindow { t: f64, horizon: f64 },
    #[error("non-stationary parameters: spectral radius {0} >= 1")]
    NonStationary(f64),
    #[error("simulation exceeded max_events = {0}")]
    MaxEventsExceeded(usize),
    #[error("non-finite intensity encountered at t = {0}")]
    NonFiniteIntensity(f64),
    #[error("infeasible point: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
