//! Hindsight relabeling.
//!
//! Every trajectory's final state becomes its goal. The first pass attaches
//! `n_avoid` sampled boxes and records whether the trajectory avoided them
//! (`z`). The second pass resamples boxes for a copy of each trajectory until
//! the copy's `z` is the opposite of the original's, so every trajectory is
//! seen both as a success and as a failure at avoidance.

pub mod hull;
pub mod samplers;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::seed::child_rng;
use crate::traj::{avoid_success, DatasetInfo, LabeledTrajectory, PairedDataset, StateVec, Trajectory};

pub use samplers::{Region, Relabeler, SamplerKind, SamplerUsed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelabelConfig {
    pub w_max: f64,
    pub n_avoid: usize,
    pub sampler: SamplerKind,
    pub restricted_region: Option<Region>,
    pub top_k: usize,
    pub epsilon: f64,
    pub max_resample_attempts: usize,
    /// State dimensions sized by the sampled width. Other dimensions span the
    /// whole state space. All dimensions when absent.
    pub box_dims: Option<Vec<usize>>,
    /// The two state dimensions the contour sampler projects onto.
    pub contour_dims: [usize; 2],
}

impl Default for RelabelConfig {
    fn default() -> Self {
        RelabelConfig {
            w_max: 0.2,
            n_avoid: 1,
            sampler: SamplerKind::Uniform,
            restricted_region: None,
            top_k: 20,
            epsilon: 0.001,
            max_resample_attempts: 1000,
            box_dims: None,
            contour_dims: [0, 1],
        }
    }
}

impl RelabelConfig {
    pub fn validate(&self, d_s: usize) -> Result<()> {
        if !(self.w_max >= 0.0) {
            return Err(CoreError::arg("w_max must be non-negative"));
        }
        if self.n_avoid == 0 {
            return Err(CoreError::arg("n_avoid must be at least 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(CoreError::arg("epsilon must be positive"));
        }
        if self.max_resample_attempts == 0 {
            return Err(CoreError::arg("max_resample_attempts must be at least 1"));
        }
        if self.sampler == SamplerKind::DiscreteTopK && self.top_k == 0 {
            return Err(CoreError::arg("top_k must be at least 1"));
        }
        if self.sampler == SamplerKind::Restricted && self.restricted_region.is_none() {
            return Err(CoreError::arg("the restricted sampler needs a restricted_region"));
        }
        if let Some(dims) = &self.box_dims {
            if dims.iter().any(|&d| d >= d_s) {
                return Err(CoreError::arg(format!("box_dims entry out of range for d_s={d_s}")));
            }
        }
        if self.sampler == SamplerKind::Contour && (self.contour_dims.iter().any(|&d| d >= d_s) || d_s < 2) {
            return Err(CoreError::arg(format!("contour_dims out of range for d_s={d_s}")));
        }
        if let Some(r) = &self.restricted_region {
            r.validate(d_s)?;
        }
        Ok(())
    }
}

/// The goal of a trajectory in hindsight: its final state.
pub fn relabel_goal(traj: &Trajectory) -> StateVec {
    traj.last_state().clone()
}

/// Outcome of the first pass for one trajectory.
#[derive(Debug, Clone)]
pub struct FirstPassItem {
    pub labeled: LabeledTrajectory,
    pub sampler: SamplerUsed,
}

pub fn first_pass(relabeler: &Relabeler, dataset: &[Trajectory], seed: u64) -> Result<Vec<FirstPassItem>> {
    dataset
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = child_rng(seed, "relabel-first", i as u64);
            let (boxes, sampler) = relabeler.sample(t, &mut rng)?;
            let labeled = LabeledTrajectory::label(t.clone(), boxes, relabel_goal(t))?;
            Ok(FirstPassItem { labeled, sampler })
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct SecondPassOutput {
    pub pairs: Vec<(LabeledTrajectory, LabeledTrajectory)>,
    /// Input indices whose opposite label was not found within the attempt cap.
    pub dropped: Vec<usize>,
    pub attempts: Vec<usize>,
    pub samplers: Vec<SamplerUsed>,
}

pub fn second_pass(relabeler: &Relabeler, labeled: &[LabeledTrajectory], seed: u64) -> Result<SecondPassOutput> {
    let mut out = SecondPassOutput::default();
    let cap = relabeler.config().max_resample_attempts;
    for (i, orig) in labeled.iter().enumerate() {
        let mut rng = child_rng(seed, "relabel-second", i as u64);
        let t = orig.trajectory();
        let mut found = None;
        for attempt in 1..=cap {
            let (boxes, used) = relabeler.sample(t, &mut rng)?;
            if avoid_success(t, &boxes)? != orig.z() {
                found = Some((boxes, used, attempt));
                break;
            }
        }
        match found {
            Some((boxes, used, attempt)) => {
                let copy = LabeledTrajectory::label(t.clone(), boxes, orig.prompt().goal.clone())?;
                out.pairs.push((orig.clone(), copy));
                out.attempts.push(attempt);
                out.samplers.push(used);
            }
            None => out.dropped.push(i),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelReport {
    pub input_trajectories: usize,
    pub retained_pairs: usize,
    pub dropped_pairs: usize,
    pub drop_rate: f64,
    /// Fraction of first-pass labels with z = 1.
    pub first_pass_z_balance: f64,
    /// Fraction of all emitted entries with z = 1 (0.5 by construction).
    pub paired_z_balance: f64,
    pub mean_second_pass_attempts: f64,
    pub max_second_pass_attempts: usize,
    pub sampler_histogram: BTreeMap<String, usize>,
}

pub fn build_paired_dataset(
    relabeler: &Relabeler,
    dataset: &[Trajectory],
    info: DatasetInfo,
    seed: u64,
) -> Result<(PairedDataset, RelabelReport)> {
    let first = first_pass(relabeler, dataset, seed)?;
    let mut hist: BTreeMap<String, usize> = BTreeMap::new();
    for item in &first {
        *hist.entry(item.sampler.name().to_string()).or_default() += 1;
    }
    let labeled: Vec<LabeledTrajectory> = first.into_iter().map(|f| f.labeled).collect();
    let z1 = labeled.iter().filter(|l| l.z()).count();
    let second = second_pass(relabeler, &labeled, seed)?;
    for s in &second.samplers {
        *hist.entry(s.name().to_string()).or_default() += 1;
    }
    let mut paired = PairedDataset::new(info);
    for (o, c) in second.pairs {
        paired.push(o, c)?;
    }
    let n = dataset.len();
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let entries: Vec<bool> = paired.entries().map(|l| l.z()).collect();
    let report = RelabelReport {
        input_trajectories: n,
        retained_pairs: paired.len(),
        dropped_pairs: second.dropped.len(),
        drop_rate: frac(second.dropped.len(), n),
        first_pass_z_balance: frac(z1, n),
        paired_z_balance: frac(entries.iter().filter(|&&z| z).count(), entries.len()),
        mean_second_pass_attempts: frac(second.attempts.iter().sum(), second.attempts.len()),
        max_second_pass_attempts: second.attempts.iter().copied().max().unwrap_or(0),
        sampler_histogram: hist,
    };
    Ok((paired, report))
}

/// Re-checks the pairing invariant and every label against the raw boxes.
pub fn verify_paired(data: &PairedDataset) -> Result<()> {
    for (i, (o, c)) in data.pairs().iter().enumerate() {
        if o.trajectory() != c.trajectory() {
            return Err(CoreError::arg(format!("pair {i}: trajectories differ")));
        }
        if o.z() == c.z() {
            return Err(CoreError::arg(format!("pair {i}: z labels are not complementary")));
        }
        for l in [o, c] {
            LabeledTrajectory::from_parts(l.trajectory().clone(), l.prompt().clone(), l.per_step_ok().to_vec())
                .map_err(|e| CoreError::arg(format!("pair {i}: {e}")))?;
            if &l.prompt().goal != l.trajectory().last_state() {
                return Err(CoreError::arg(format!("pair {i}: goal is not the final state")));
            }
        }
    }
    Ok(())
}
