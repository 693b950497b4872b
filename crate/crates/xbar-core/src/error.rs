//! Error type shared by all core operations.

use thiserror::Error;

/// Errors reported by assembly, solves, model construction and I/O.
///
/// The type is `Clone` so that a failed factorization can be cached inside an
/// immutable system and handed back on every subsequent solve attempt.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("ill-conditioned solve: relative residual {residual:.3e} exceeds {limit:.3e} (condition estimate {cond_estimate:.3e})")]
    IllConditioned {
        residual: f64,
        limit: f64,
        cond_estimate: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
