use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("network spec error: {0}")]
    Spec(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("mapping error: {0}")]
    Mapping(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] xbar_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
