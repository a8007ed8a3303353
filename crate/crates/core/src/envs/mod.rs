//! Episodic environments sharing one interface.
//!
//! All randomness is drawn from the generator passed in by the caller, so an
//! episode is a pure function of its seed.

pub mod boolnet;
pub mod cardio;
pub mod maze;
pub mod reach;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::seed::{child_rng, derive, Rng};
use crate::traj::{ActionVec, AvoidBox, EpisodeMeta, StateVec, Trajectory};

pub use boolnet::BooleanNetwork;
pub use cardio::{CardioConfig, CardioEnv};
pub use maze::{MazeConfig, MazeEnv};
pub use reach::{ReachConfig, ReachEnv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: String,
    pub d_s: usize,
    pub d_a: usize,
    pub max_episode_steps: usize,
    pub goal_tolerance: f64,
    pub state_bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: StateVec,
    pub reached: bool,
    pub done: bool,
}

pub trait Env {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode: samples start, goal and avoid regions.
    fn reset(&mut self, rng: &mut Rng) -> StateVec;

    fn state(&self) -> StateVec;

    fn goal(&self) -> StateVec;

    /// The avoid regions of the current episode, as prompt boxes.
    fn avoid_boxes(&self) -> &[AvoidBox];

    fn step_count(&self) -> usize;

    fn step(&mut self, action: &[f64], rng: &mut Rng) -> Result<StepOutcome>;

    fn sample_action(&self, rng: &mut Rng) -> ActionVec;

    /// `Some(len)` for environments whose random data is one long stream cut
    /// into fixed-length trajectories instead of goal-terminated episodes.
    fn stream_segment(&self) -> Option<usize> {
        None
    }
}

/// Random-policy data. Trajectory lengths always sum to `n_steps`.
///
/// Episodic environments reset on `done`; streaming environments run one
/// uninterrupted walk that is split into segments.
pub fn random_rollout(env: &mut dyn Env, seed: u64, n_steps: usize) -> Result<Vec<Trajectory>> {
    let env_id = env.spec().env_id.clone();
    let mut out = Vec::new();
    if let Some(seg) = env.stream_segment() {
        let mut rng = child_rng(seed, "stream", 0);
        env.reset(&mut rng);
        let mut states = Vec::with_capacity(seg);
        let mut actions = Vec::with_capacity(seg);
        for _ in 0..n_steps {
            let a = env.sample_action(&mut rng);
            states.push(env.state());
            env.step(&a, &mut rng)?;
            actions.push(a);
            if states.len() == seg {
                let meta = EpisodeMeta { seed: derive(seed, "segment", out.len() as u64), env: env_id.clone() };
                out.push(Trajectory::new(std::mem::take(&mut states), std::mem::take(&mut actions), meta)?);
            }
        }
        if !states.is_empty() {
            let meta = EpisodeMeta { seed: derive(seed, "segment", out.len() as u64), env: env_id };
            out.push(Trajectory::new(states, actions, meta)?);
        }
        return Ok(out);
    }
    let mut remaining = n_steps;
    let mut episode = 0u64;
    while remaining > 0 {
        let ep_seed = derive(seed, "episode", episode);
        let mut rng = crate::seed::rng_from(ep_seed);
        env.reset(&mut rng);
        let mut states = Vec::new();
        let mut actions = Vec::new();
        while remaining > 0 {
            let a = env.sample_action(&mut rng);
            states.push(env.state());
            let o = env.step(&a, &mut rng)?;
            actions.push(a);
            remaining -= 1;
            if o.done {
                break;
            }
        }
        out.push(Trajectory::new(states, actions, EpisodeMeta { seed: ep_seed, env: env_id.clone() })?);
        episode += 1;
    }
    Ok(out)
}

pub(crate) fn clip_unit(a: f64) -> f64 {
    if a.is_nan() {
        0.0
    } else {
        a.clamp(-1.0, 1.0)
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
