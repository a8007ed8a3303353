use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: schema error: {msg}")]
    Schema { line: usize, msg: String },

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("rules file line {line}: {msg}")]
    Rules { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        CoreError::Argument(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(CoreError::Dimension { expected, got })
    }
}
