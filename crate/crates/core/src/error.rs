use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a model invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// The instance cannot be handled by the requested solver.
    #[error("unsupported instance: {0}")]
    Unsupported(String),

    /// An action violates the one-user-per-BS or activity rules.
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("table index {index} out of range (size {size})")]
    TableIndex { index: usize, size: usize },

    #[error("no convergence after {iterations} iterations (last span {last_span:e})")]
    NonConvergence {
        iterations: usize,
        last_span: f64,
        /// Tail of the span-seminorm history, most recent last.
        span_history: Vec<f64>,
    },

    #[error("singular linear system of dimension {dim}: {detail}")]
    Singular { dim: usize, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
