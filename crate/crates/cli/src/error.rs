use thiserror::Error;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments; nothing was run.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] reachavoid_core::CoreError),
    #[error(transparent)]
    Nn(#[from] reachavoid_nn::NnError),
    #[error(transparent)]
    Train(#[from] reachavoid_train::TrainError),
    #[error(transparent)]
    Eval(#[from] reachavoid_eval::EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
