//! Batch sampling over paired-dataset entries.

use rand::Rng as _;
use reachavoid_core::seed::Rng;
use reachavoid_core::{ActionVec, PairedDataset, PromptSpec, StateVec};
use reachavoid_nn::SeqItem;

use crate::error::{Result, TrainError};

/// One training sequence: prompt, a window of states and actions, and the
/// per-state "outside every box" targets.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub entry: usize,
    pub prompt: PromptSpec,
    pub states: Vec<StateVec>,
    pub actions: Vec<ActionVec>,
    pub k: Vec<f64>,
}

impl BatchItem {
    pub fn seq(&self) -> SeqItem<'_> {
        SeqItem { prompt: &self.prompt, states: &self.states, actions: &self.actions }
    }
}

/// `batch_size` entry indices drawn uniformly with replacement.
pub fn sample_indices(n_entries: usize, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n_entries == 0 {
        return Err(TrainError::Config("cannot sample a batch from an empty dataset".into()));
    }
    Ok((0..batch_size).map(|_| rng.random_range(0..n_entries)).collect())
}

/// Samples entries with replacement. Trajectories longer than `max_states`
/// are cut to a uniformly placed window of that many steps.
pub fn sample_batch(data: &PairedDataset, batch_size: usize, max_states: usize, rng: &mut Rng) -> Result<Vec<BatchItem>> {
    if max_states == 0 {
        return Err(TrainError::Config("context holds no states".into()));
    }
    let idx = sample_indices(data.entry_count(), batch_size, rng)?;
    Ok(idx
        .into_iter()
        .map(|i| {
            let e = data.entry(i);
            let t = e.trajectory();
            let start = if t.len() > max_states { rng.random_range(0..=t.len() - max_states) } else { 0 };
            let end = (start + max_states).min(t.len());
            BatchItem {
                entry: i,
                prompt: e.prompt().clone(),
                states: t.states()[start..end].to_vec(),
                actions: t.actions()[start..end].to_vec(),
                k: e.per_step_ok()[start..end].iter().map(|&ok| if ok { 1.0 } else { 0.0 }).collect(),
            }
        })
        .collect())
}
