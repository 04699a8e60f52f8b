use serde::Serialize;

/// Failure reported on stderr as a single JSON object.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(error: &'static str, message: impl Into<String>) -> Self {
        Self { error, message: message.into() }
    }

    pub fn missing(flag: &str) -> Self {
        Self::new("usage", format!("missing required value --{flag}"))
    }

    pub fn report(&self) {
        eprintln!("{}", serde_json::to_string(self).expect("error serializes"));
    }
}

impl From<hawkes_core::Error> for CliError {
    fn from(e: hawkes_core::Error) -> Self {
        use hawkes_core::Error::*;
        let kind = match &e {
            Dimension(_) | IndexOutOfRange { .. } => "dimension",
            InvalidParams(_) => "invalid_params",
            InvalidEvents(_) | TimeOutOfWindow { .. } => "invalid_events",
            NonStationary(_) => "non_stationary",
            MaxEventsExceeded(_) => "max_events",
            NonFiniteIntensity(_) | Numerical(_) => "numerical",
            Infeasible(_) => "infeasible",
            Config(_) => "config",
            Io(_) => "io",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("config", e.to_string())
    }
}
