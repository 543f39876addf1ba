use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("iterate became non-finite or exceeded the divergence cap")]
    NonFiniteIterate,
    #[error("inner solve did not reach tolerance {tol:e} in {iters} iterations (residual {residual:e})")]
    InnerSolveFailure { iters: usize, tol: f64, residual: f64 },
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("requested {requested} operators but only {available} Pauli words exist")]
    TooManyOperators { requested: usize, available: usize },
    #[error("state has zero norm")]
    ZeroState,
    #[error("splitting is inconsistent with the gradient at {point:?} (mismatch {mismatch:e})")]
    InconsistentSplitting { point: Vec<f64>, mismatch: f64 },
    #[error("invalid value for `{path}`: {reason}")]
    Config { path: String, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
