use thiserror::Error;

/// Errors raised by the solvers, the optimizer and the scenario layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value {value} outside the domain ({lo}, {hi}) of the potential")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "Newton failed at time step {step} after {iterations} iterations (residual {residual:.3e})"
    )]
    StepFailure {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
