use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] reachavoid_core::CoreError),
    #[error(transparent)]
    Nn(#[from] reachavoid_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss diverged at step {step}: action {loss_action}, awareness {loss_awareness}")]
    Diverged { step: usize, loss_action: f64, loss_awareness: f64 },
    #[error("checkpoint evaluation failed: {0}")]
    Eval(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;
