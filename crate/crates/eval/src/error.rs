use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Core(#[from] reachavoid_core::CoreError),
    #[error(transparent)]
    Nn(#[from] reachavoid_nn::NnError),
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

impl EvalError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        EvalError::Argument(msg.into())
    }
}
