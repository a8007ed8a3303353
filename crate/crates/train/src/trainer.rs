//! The training loop, checkpointing and checkpoint selection.
//!
//! Step `s` (zero-based) draws its batch and dropout masks from
//! `child_rng(seed, "train-step", s)`, so a run resumed from a checkpoint
//! continues exactly as the uninterrupted run would have.

use std::fs;
use std::path::{Path, PathBuf};

use reachavoid_core::seed::child_rng;
use reachavoid_core::PairedDataset;
use reachavoid_nn::checkpoint::{load_model, save_model};
use reachavoid_nn::{Graph, Model};
use serde::{Deserialize, Serialize};

use crate::batch::sample_batch;
use crate::config::{lr_at, TrainConfig};
use crate::error::{Result, TrainError};
use crate::loss::batch_loss;
use crate::optim::AdamW;

pub const LOG_FILE: &str = "training_log.csv";
pub const SELECTED_FILE: &str = "selected.json";
pub const MODEL_FILE: &str = "model.bin";
pub const OPTIMIZER_FILE: &str = "optimizer.bin";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub step: usize,
    /// Checkpoint directory relative to the run directory, when saved.
    pub path: Option<String>,
    pub sr: f64,
    pub mnc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub loss_action: f64,
    pub loss_awareness: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub records: Vec<CheckpointRecord>,
    pub selected: Option<CheckpointRecord>,
    pub log: Vec<StepLog>,
}

/// Scores a checkpoint: `(sr, mnc)`.
pub type Evaluator<'a> = dyn FnMut(&Model, usize) -> Result<(f64, f64)> + 'a;

/// Among records whose SR is within 0.05 of the best SR, the one with the
/// lowest MNC; later steps win ties.
pub fn select_checkpoint(records: &[CheckpointRecord]) -> Option<&CheckpointRecord> {
    let best_sr = records.iter().map(|r| r.sr).fold(f64::NEG_INFINITY, f64::max);
    let mut chosen: Option<&CheckpointRecord> = None;
    for r in records.iter().filter(|r| r.sr >= best_sr - 0.05) {
        chosen = match chosen {
            Some(c) if c.mnc < r.mnc || (c.mnc == r.mnc && c.step > r.step) => Some(c),
            _ => Some(r),
        };
    }
    chosen
}

pub fn checkpoint_dir(out: &Path, step: usize) -> PathBuf {
    out.join("ckpt").join(format!("step_{step}"))
}

/// Trains from scratch. With `out_dir`, writes checkpoints, the CSV log and
/// the selection; without, only returns them.
pub fn train_loop(
    model: &mut Model,
    data: &PairedDataset,
    cfg: &TrainConfig,
    seed: u64,
    out_dir: Option<&Path>,
    evaluator: &mut Evaluator,
) -> Result<TrainOutput> {
    let opt = AdamW::new(model.params(), cfg);
    run(model, opt, 0, Vec::new(), Vec::new(), data, cfg, seed, out_dir, evaluator)
}

/// Continues a run from the checkpoint written after `from_step` steps.
pub fn resume_loop(
    out_dir: &Path,
    from_step: usize,
    data: &PairedDataset,
    cfg: &TrainConfig,
    seed: u64,
    evaluator: &mut Evaluator,
) -> Result<(Model, TrainOutput)> {
    let dir = checkpoint_dir(out_dir, from_step);
    let mut model = load_model(&dir.join(MODEL_FILE))?;
    let opt = AdamW::load(&dir.join(OPTIMIZER_FILE), model.params(), cfg)?;
    let mut records = Vec::new();
    let mut step = cfg.checkpoint_every;
    while step <= from_step {
        let text = fs::read_to_string(checkpoint_dir(out_dir, step).join(METRICS_FILE))?;
        records.push(serde_json::from_str(&text)?);
        step += cfg.checkpoint_every;
    }
    let mut log = Vec::new();
    for row in csv::Reader::from_path(out_dir.join(LOG_FILE))?.deserialize() {
        let row: StepLog = row?;
        if row.step < from_step {
            log.push(row);
        }
    }
    let out = run(&mut model, opt, from_step, records, log, data, cfg, seed, Some(out_dir), evaluator)?;
    Ok((model, out))
}

#[allow(clippy::too_many_arguments)]
fn run(
    model: &mut Model,
    mut opt: AdamW,
    start: usize,
    mut records: Vec<CheckpointRecord>,
    mut log: Vec<StepLog>,
    data: &PairedDataset,
    cfg: &TrainConfig,
    seed: u64,
    out_dir: Option<&Path>,
    evaluator: &mut Evaluator,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::Config("training data is empty".into()));
    }
    let max_boxes = data.entries().map(|e| e.prompt().boxes.len()).max().unwrap_or(0);
    let max_states = model.max_states(max_boxes);
    for s in start..cfg.total_steps {
        let lr = lr_at(s, cfg);
        let mut rng = child_rng(seed, "train-step", s as u64);
        let batch = sample_batch(data, cfg.batch_size, max_states, &mut rng)?;
        let (mut grads, row) = {
            let mut g = Graph::new(model.params());
            let l = batch_loss(&mut g, model, &batch, cfg.alpha, Some(&mut rng))?;
            let (total, la, lk) = (g.value(l.total)[0], g.value(l.action)[0], g.value(l.awareness)[0]);
            if !total.is_finite() {
                return Err(TrainError::Diverged { step: s, loss_action: la, loss_awareness: lk });
            }
            let grads = g.backward(l.total)?;
            (grads, StepLog { step: s, loss: total, loss_action: la, loss_awareness: lk, lr, grad_norm: 0.0 })
        };
        let grad_norm = opt.step(model.params_mut(), &mut grads, lr);
        log.push(StepLog { grad_norm, ..row });
        if s % 100 == 0 {
            log::info!("step {s}: loss {:.5} (action {:.5}, awareness {:.5}) lr {lr:.2e}", row.loss, row.loss_action, row.loss_awareness);
        }
        let done = s + 1;
        if done % cfg.checkpoint_every == 0 {
            let (sr, mnc) = evaluator(model, done)?;
            log::info!("checkpoint {done}: sr {sr:.3} mnc {mnc:.4}");
            let mut rec = CheckpointRecord { step: done, path: None, sr, mnc };
            if let Some(out) = out_dir {
                let dir = checkpoint_dir(out, done);
                fs::create_dir_all(&dir)?;
                save_model(model, &dir.join(MODEL_FILE))?;
                opt.save(&dir.join(OPTIMIZER_FILE))?;
                rec.path = Some(format!("ckpt/step_{done}"));
                fs::write(dir.join(METRICS_FILE), serde_json::to_string_pretty(&rec)?)?;
                write_log(&out.join(LOG_FILE), &log)?;
            }
            records.push(rec);
        }
    }
    let selected = select_checkpoint(&records).cloned();
    if let Some(out) = out_dir {
        write_log(&out.join(LOG_FILE), &log)?;
        if let Some(sel) = &selected {
            fs::write(out.join(SELECTED_FILE), serde_json::to_string_pretty(sel)?)?;
        }
    }
    Ok(TrainOutput { records, selected, log })
}

fn write_log(path: &Path, log: &[StepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
