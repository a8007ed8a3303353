//! Cell reprogramming on a Boolean gene-regulatory network.
//!
//! An action is a one-hot choice of gene. The chosen gene is flipped, then
//! `k` asynchronous updates run; the result is the next state.

use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::boolnet::BooleanNetwork;
use super::{Env, EnvSpec, StepOutcome};
use crate::error::{check_dim, CoreError, Result};
use crate::seed::Rng;
use crate::traj::{ActionVec, AvoidBox, StateVec};

/// The rule set shipped with the crate.
pub const DEFAULT_RULES: &str = include_str!("../../data/cardiogenesis.rules");

/// First heart field attractor.
pub const FHF: &str = "000010010100000";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CardioConfig {
    /// Rules file; the shipped network when absent.
    pub rules: Option<PathBuf>,
    pub k: usize,
    pub max_episode_steps: usize,
    pub segment_len: usize,
    pub goal: String,
    /// Fixed start state; a random attractor other than the goal when absent.
    pub start: Option<String>,
    pub avoid_states: Vec<String>,
    pub epsilon: f64,
}

impl Default for CardioConfig {
    fn default() -> Self {
        CardioConfig {
            rules: None,
            k: 10,
            max_episode_steps: 30,
            segment_len: 30,
            goal: FHF.into(),
            start: None,
            avoid_states: Vec::new(),
            epsilon: 0.001,
        }
    }
}

impl CardioConfig {
    pub fn load_network(&self) -> Result<BooleanNetwork> {
        match &self.rules {
            Some(p) => BooleanNetwork::parse(&std::fs::read_to_string(p)?),
            None => BooleanNetwork::parse(DEFAULT_RULES),
        }
    }
}

/// Flips `gene`, then applies `k` asynchronous updates.
pub fn cardio_step(net: &BooleanNetwork, state: u32, gene: usize, rng: &mut Rng, k: usize) -> Result<u32> {
    if gene >= net.n_genes() {
        return Err(CoreError::arg(format!("gene index {gene} out of range for {} genes", net.n_genes())));
    }
    let mut s = state ^ 1 << gene;
    for _ in 0..k {
        s = net.async_update(s, rng);
    }
    Ok(s)
}

/// Axis-aligned box of half-width `epsilon` around a discrete state.
pub fn state_box(state: &[f64], epsilon: f64) -> AvoidBox {
    AvoidBox::new(
        state.iter().map(|v| v - epsilon).collect(),
        state.iter().map(|v| v + epsilon).collect(),
    )
    .expect("epsilon is non-negative")
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct CardioEnv {
    cfg: CardioConfig,
    net: Arc<BooleanNetwork>,
    attractors: Arc<Vec<u32>>,
    spec: EnvSpec,
    goal: u32,
    start: Option<u32>,
    avoid: Vec<u32>,
    boxes: Vec<AvoidBox>,
    state: u32,
    steps: usize,
}

impl CardioEnv {
    pub fn new(cfg: CardioConfig) -> Result<Self> {
        let net = cfg.load_network()?;
        CardioEnv::with_network(cfg, net)
    }

    pub fn with_network(cfg: CardioConfig, net: BooleanNetwork) -> Result<Self> {
        if cfg.max_episode_steps == 0 || cfg.segment_len == 0 {
            return Err(CoreError::arg("cardio step limit and segment length must be at least 1"));
        }
        if !(cfg.epsilon > 0.0 && cfg.epsilon < 0.5) {
            return Err(CoreError::arg("cardio epsilon must lie in (0, 0.5)"));
        }
        let n = net.n_genes();
        let goal = net.parse_bitstring(&cfg.goal)?;
        let start = cfg.start.as_deref().map(|s| net.parse_bitstring(s)).transpose()?;
        let avoid = cfg.avoid_states.iter().map(|s| net.parse_bitstring(s)).collect::<Result<Vec<_>>>()?;
        let attractors = net.attractors();
        let spec = EnvSpec {
            env_id: "cardio".into(),
            d_s: n,
            d_a: n,
            max_episode_steps: cfg.max_episode_steps,
            goal_tolerance: 0.0,
            state_bounds: vec![(0.0, 1.0); n],
        };
        let mut env = CardioEnv {
            cfg,
            net: Arc::new(net),
            attractors: Arc::new(attractors),
            spec,
            goal,
            start,
            avoid: Vec::new(),
            boxes: Vec::new(),
            state: start.unwrap_or(0),
            steps: 0,
        };
        env.set_avoid_states(avoid);
        Ok(env)
    }

    pub fn network(&self) -> &BooleanNetwork {
        &self.net
    }

    pub fn attractors(&self) -> &[u32] {
        &self.attractors
    }

    pub fn config(&self) -> &CardioConfig {
        &self.cfg
    }

    pub fn state_bits(&self) -> u32 {
        self.state
    }

    pub fn goal_bits(&self) -> u32 {
        self.goal
    }

    pub fn set_goal(&mut self, goal: u32) {
        self.goal = goal;
    }

    pub fn set_start(&mut self, start: Option<u32>) {
        self.start = start;
    }

    pub fn set_avoid_states(&mut self, states: Vec<u32>) {
        let eps = self.cfg.epsilon;
        self.boxes = states.iter().map(|&s| state_box(&self.net.to_vec(s), eps)).collect();
        self.avoid = states;
    }

    pub fn avoid_states(&self) -> &[u32] {
        &self.avoid
    }
}

impl Env for CardioEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> StateVec {
        self.state = match self.start {
            Some(s) => s,
            None => {
                let pool: Vec<u32> = self.attractors.iter().copied().filter(|&a| a != self.goal).collect();
                if pool.is_empty() {
                    rng.random_range(0..1u32 << self.net.n_genes())
                } else {
                    pool[rng.random_range(0..pool.len())]
                }
            }
        };
        self.steps = 0;
        self.state()
    }

    fn state(&self) -> StateVec {
        StateVec(self.net.to_vec(self.state))
    }

    fn goal(&self) -> StateVec {
        StateVec(self.net.to_vec(self.goal))
    }

    fn avoid_boxes(&self) -> &[AvoidBox] {
        &self.boxes
    }

    fn step_count(&self) -> usize {
        self.steps
    }

    fn step(&mut self, action: &[f64], rng: &mut Rng) -> Result<StepOutcome> {
        check_dim(self.net.n_genes(), action.len())?;
        self.state = cardio_step(&self.net, self.state, argmax(action), rng, self.cfg.k)?;
        self.steps += 1;
        let reached = self.state == self.goal;
        Ok(StepOutcome {
            state: self.state(),
            reached,
            done: reached || self.steps >= self.cfg.max_episode_steps,
        })
    }

    fn sample_action(&self, rng: &mut Rng) -> ActionVec {
        let n = self.net.n_genes();
        let g = rng.random_range(0..n);
        ActionVec((0..n).map(|i| if i == g { 1.0 } else { 0.0 }).collect())
    }

    fn stream_segment(&self) -> Option<usize> {
        Some(self.cfg.segment_len)
    }
}
