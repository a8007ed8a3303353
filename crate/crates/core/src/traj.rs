//! Trajectories, avoid boxes and prompts.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CoreError, Result};

/// A point in an environment's state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(pub Vec<f64>);

/// An action vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionVec(pub Vec<f64>);

impl Deref for StateVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for ActionVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StateVec {
    fn from(v: Vec<f64>) -> Self {
        StateVec(v)
    }
}

impl From<Vec<f64>> for ActionVec {
    fn from(v: Vec<f64>) -> Self {
        ActionVec(v)
    }
}

impl StateVec {
    /// Renders a binary state leftmost-first, e.g. `000010010100000`.
    pub fn to_bitstring(&self) -> String {
        self.0.iter().map(|&v| if v >= 0.5 { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0.0),
                '1' => Ok(1.0),
                other => Err(CoreError::arg(format!("invalid bit {other:?} in state string"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(StateVec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EpisodeMeta {
    pub seed: u64,
    pub env: String,
}

/// One episode: `states[t]` is the state the agent was in when it took `actions[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<StateVec>,
    actions: Vec<ActionVec>,
    pub meta: EpisodeMeta,
}

impl Trajectory {
    pub fn new(states: Vec<StateVec>, actions: Vec<ActionVec>, meta: EpisodeMeta) -> Result<Self> {
        if states.is_empty() {
            return Err(CoreError::arg("trajectory must contain at least one state"));
        }
        if states.len() != actions.len() {
            return Err(CoreError::arg(format!(
                "trajectory has {} states but {} actions",
                states.len(),
                actions.len()
            )));
        }
        let d_s = states[0].len();
        let d_a = actions[0].len();
        for s in &states {
            check_dim(d_s, s.len())?;
            if s.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::arg("non-finite state value"));
            }
        }
        for a in &actions {
            check_dim(d_a, a.len())?;
            if a.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::arg("non-finite action value"));
            }
        }
        Ok(Trajectory { states, actions, meta })
    }

    pub fn states(&self) -> &[StateVec] {
        &self.states
    }

    pub fn actions(&self) -> &[ActionVec] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn action_dim(&self) -> usize {
        self.actions[0].len()
    }

    pub fn last_state(&self) -> &StateVec {
        self.states.last().expect("non-empty by construction")
    }
}

/// Axis-aligned box in state space. Membership is inclusive on both bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AvoidBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(CoreError::arg(format!(
                "box lower bound exceeds upper bound in dimension {i} ({} > {})",
                lower[i], upper[i]
            )));
        }
        Ok(AvoidBox { lower, upper })
    }

    /// Box of side `width` centred on `centroid`.
    pub fn from_centroid(centroid: &[f64], width: f64) -> Result<Self> {
        if !(width >= 0.0) {
            return Err(CoreError::arg(format!("box width must be non-negative, got {width}")));
        }
        let half = width / 2.0;
        Ok(AvoidBox {
            lower: centroid.iter().map(|c| c - half).collect(),
            upper: centroid.iter().map(|c| c + half).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn contains(&self, s: &[f64]) -> Result<bool> {
        check_dim(self.dim(), s.len())?;
        Ok(self.contains_unchecked(s))
    }

    pub(crate) fn contains_unchecked(&self, s: &[f64]) -> bool {
        s.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Prompt encoding: lower bounds followed by upper bounds.
    pub fn token(&self) -> Vec<f64> {
        self.lower.iter().chain(&self.upper).copied().collect()
    }
}

pub fn box_contains(b: &AvoidBox, s: &StateVec) -> Result<bool> {
    b.contains(s)
}

fn check_boxes(boxes: &[AvoidBox], d_s: usize) -> Result<()> {
    boxes.iter().try_for_each(|b| check_dim(d_s, b.dim()))
}

/// Element `t` is true iff `states[t]` lies outside every box.
pub fn per_step_violation(traj: &Trajectory, boxes: &[AvoidBox]) -> Result<Vec<bool>> {
    per_state_ok(traj.states(), boxes)
}

pub fn per_state_ok(states: &[StateVec], boxes: &[AvoidBox]) -> Result<Vec<bool>> {
    if let Some(s) = states.first() {
        check_boxes(boxes, s.len())?;
    }
    Ok(states
        .iter()
        .map(|s| !boxes.iter().any(|b| b.contains_unchecked(s)))
        .collect())
}

/// True iff no state of the trajectory lies in any box.
pub fn avoid_success(traj: &Trajectory, boxes: &[AvoidBox]) -> Result<bool> {
    check_boxes(boxes, traj.state_dim())?;
    Ok(!traj
        .states()
        .iter()
        .any(|s| boxes.iter().any(|b| b.contains_unchecked(s))))
}

/// Conditioning prompt: avoid-success flag, avoid boxes and goal.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub z: bool,
    pub boxes: Vec<AvoidBox>,
    pub goal: StateVec,
}

impl PromptSpec {
    pub fn new(z: bool, boxes: Vec<AvoidBox>, goal: StateVec) -> Result<Self> {
        check_boxes(&boxes, goal.len())?;
        Ok(PromptSpec { z, boxes, goal })
    }

    pub fn d_s(&self) -> usize {
        self.goal.len()
    }

    /// Number of prompt tokens: z, avoid start, boxes, goal start, goal, end.
    pub fn token_count(&self) -> usize {
        self.boxes.len() + 5
    }
}

/// A trajectory with its hindsight prompt and per-step box indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    trajectory: Trajectory,
    prompt: PromptSpec,
    per_step_ok: Vec<bool>,
}

impl LabeledTrajectory {
    /// Labels `trajectory` against `boxes`, deriving `z` and the per-step flags.
    pub fn label(trajectory: Trajectory, boxes: Vec<AvoidBox>, goal: StateVec) -> Result<Self> {
        check_dim(trajectory.state_dim(), goal.len())?;
        let per_step_ok = per_step_violation(&trajectory, &boxes)?;
        let z = per_step_ok.iter().all(|&ok| ok);
        let prompt = PromptSpec::new(z, boxes, goal)?;
        Ok(LabeledTrajectory { trajectory, prompt, per_step_ok })
    }

    /// Reassembles a labeled trajectory, checking that the stored labels are consistent.
    pub fn from_parts(trajectory: Trajectory, prompt: PromptSpec, per_step_ok: Vec<bool>) -> Result<Self> {
        check_dim(trajectory.state_dim(), prompt.d_s())?;
        if per_step_ok.len() != trajectory.len() {
            return Err(CoreError::arg(format!(
                "per_step_ok has length {} for a trajectory of length {}",
                per_step_ok.len(),
                trajectory.len()
            )));
        }
        let expected = per_step_violation(&trajectory, &prompt.boxes)?;
        if expected != per_step_ok {
            return Err(CoreError::arg("per_step_ok disagrees with the prompt boxes"));
        }
        if prompt.z != per_step_ok.iter().all(|&ok| ok) {
            return Err(CoreError::arg("z disagrees with per_step_ok"));
        }
        Ok(LabeledTrajectory { trajectory, prompt, per_step_ok })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn prompt(&self) -> &PromptSpec {
        &self.prompt
    }

    pub fn per_step_ok(&self) -> &[bool] {
        &self.per_step_ok
    }

    pub fn z(&self) -> bool {
        self.prompt.z
    }
}

/// Dataset-level metadata shared by every record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetInfo {
    pub d_s: usize,
    pub d_a: usize,
    pub env: String,
}

/// Each trajectory twice, with complementary avoid-success labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub info: DatasetInfo,
    pairs: Vec<(LabeledTrajectory, LabeledTrajectory)>,
}

impl PairedDataset {
    pub fn new(info: DatasetInfo) -> Self {
        PairedDataset { info, pairs: Vec::new() }
    }

    pub fn push(&mut self, orig: LabeledTrajectory, copy: LabeledTrajectory) -> Result<()> {
        if orig.trajectory != copy.trajectory {
            return Err(CoreError::arg("paired trajectories differ"));
        }
        if orig.z() == copy.z() {
            return Err(CoreError::arg("paired trajectories must have complementary z"));
        }
        check_dim(self.info.d_s, orig.trajectory.state_dim())?;
        check_dim(self.info.d_a, orig.trajectory.action_dim())?;
        self.pairs.push((orig, copy));
        Ok(())
    }

    pub fn pairs(&self) -> &[(LabeledTrajectory, LabeledTrajectory)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All labeled trajectories, both pair members, in pair order.
    pub fn entries(&self) -> impl Iterator<Item = &LabeledTrajectory> {
        self.pairs.iter().flat_map(|(a, b)| [a, b])
    }

    pub fn entry_count(&self) -> usize {
        2 * self.pairs.len()
    }

    pub fn entry(&self, i: usize) -> &LabeledTrajectory {
        let (a, b) = &self.pairs[i / 2];
        if i % 2 == 0 {
            a
        } else {
            b
        }
    }
}
