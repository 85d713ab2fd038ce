use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run diverged at iteration {iter}: {reason} (partial artifacts in {dir})")]
    Diverged {
        iter: usize,
        reason: String,
        dir: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: u64,
        message: String,
    },
    #[error("{0} oracle checks failed")]
    Validation(usize),
    #[error(transparent)]
    Core(#[from] pib_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for divergence,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(pib_core::Error::Config(_)) => 2,
            HarnessError::Diverged { .. }
            | HarnessError::Core(pib_core::Error::Diverged { .. }) => 3,
            _ => 1,
        }
    }
}
