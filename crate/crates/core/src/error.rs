use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown atomic set `{0}` (known: l1, nuclear, linf, spectral, birkhoff, cut-p1, cut-p2)")]
    UnknownSet(String),

    #[error("atomic set `{set}` does not provide {capability}")]
    MissingCapability {
        set: &'static str,
        capability: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations (block residuals {residuals:?})")]
    NonConvergence {
        iterations: usize,
        residuals: Vec<f64>,
        last: Box<nalgebra::DVector<f64>>,
    },

    #[error("bisection on lambda failed in bracket [{lo:e}, {hi:e}]: {message}")]
    Bracket { lo: f64, hi: f64, message: String },

    #[error("problem file: key `{key}`: {message}")]
    ProblemFormat { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(expected: impl ToString, found: impl ToString) -> Error {
    Error::Shape {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
