use thiserror::Error;

/// Errors raised across the simulator, solvers and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("site index {index} out of range for a torus with {sites} sites")]
    Index { index: usize, sites: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("event budget of {budget} events exhausted at t = {time:.6e} (horizon {horizon})")]
    BudgetExceeded { budget: u64, time: f64, horizon: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("malformed snapshot stream: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
