use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {what} (layer {layer})")]
    NonFinite { layer: usize, what: &'static str },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },
    #[error("dense path limited to D <= {limit}, got D = {dim}; use the implicit Fisher instead")]
    Capacity { dim: usize, limit: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("retraining did not converge for resamples {0:?}")]
    NotConverged(Vec<usize>),
    #[error("training diverged at iteration {iter}: {reason}")]
    Diverged { iter: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}
