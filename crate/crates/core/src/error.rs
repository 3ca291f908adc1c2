use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or precondition violation: bad dimensions, out-of-range
    /// parameters, empty inputs.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// Loss or parameters became non-finite during optimization.
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("empty shape: {0}")]
    EmptyShape(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    /// The assembled system has rigid-body modes left.
    #[error("constraint error: {0}")]
    Constraint(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64, history: Vec<f64> },

    #[error("{path}:{line}: parse error: {detail}")]
    Parse { path: String, line: usize, detail: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("integrity error in {path}: {detail}")]
    Integrity { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
