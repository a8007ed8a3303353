//! Supervised training of the reach-avoid transformer on paired data.

pub mod batch;
pub mod config;
pub mod error;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use batch::{sample_batch, sample_indices, BatchItem};
pub use config::{lr_at, Scheduler, TrainConfig};
pub use error::{Result, TrainError};
pub use loss::{batch_loss, combined_loss, loss_action, loss_avoid_awareness};
pub use optim::AdamW;
pub use trainer::{
    checkpoint_dir, resume_loop, select_checkpoint, train_loop, CheckpointRecord, Evaluator, StepLog, TrainOutput, LOG_FILE,
    METRICS_FILE, MODEL_FILE, OPTIMIZER_FILE, SELECTED_FILE,
};
