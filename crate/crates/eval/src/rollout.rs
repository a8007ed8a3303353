//! Batched evaluation rollouts.
//!
//! All live episodes advance in lockstep so a transformer policy can score
//! them in one forward pass per step. Episode `i` draws its environment
//! randomness from `child_rng(seed, "eval-episode", i)`; policy randomness
//! comes from a separate stream, so two policies evaluated with the same seed
//! see the same starts, goals and boxes.

use reachavoid_core::envs::Env;
use reachavoid_core::seed::{child_rng, derive, Rng};
use reachavoid_core::{ActionVec, AvoidBox, PromptSpec, StateVec};
use reachavoid_nn::{Model, SeqItem};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::metrics::{mean, mnc, step_cost, success_rate};

pub trait Policy {
    /// One action per item. `envs[i]` is the environment of `items[i]`.
    fn act(&mut self, items: &[SeqItem], envs: &[&dyn Env], rng: &mut Rng) -> Result<Vec<ActionVec>>;
}

/// Greedy transformer policy.
pub struct ModelPolicy<'m>(pub &'m Model);

impl Policy for ModelPolicy<'_> {
    fn act(&mut self, items: &[SeqItem], _envs: &[&dyn Env], _rng: &mut Rng) -> Result<Vec<ActionVec>> {
        Ok(self.0.predict_actions(items)?)
    }
}

/// Uniform random actions from each environment's action sampler.
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&mut self, items: &[SeqItem], envs: &[&dyn Env], rng: &mut Rng) -> Result<Vec<ActionVec>> {
        Ok(envs.iter().take(items.len()).map(|e| e.sample_action(rng)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_episodes: usize,
    pub seed: u64,
    /// Boxes used for every episode instead of the environment's own.
    pub fixed_boxes: Option<Vec<AvoidBox>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_episodes: 60, seed: 0, fixed_boxes: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub seed: u64,
    /// Number of transitions.
    pub length: usize,
    /// Transitions that ended inside a box.
    pub cost: u32,
    pub mnc: f64,
    pub reached: bool,
    pub boxes: Vec<AvoidBox>,
    #[serde(skip)]
    pub states: Vec<StateVec>,
    #[serde(skip)]
    pub actions: Vec<ActionVec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_episodes: usize,
    pub sr: f64,
    pub mnc: f64,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalReport {
    pub fn from_episodes(episodes: Vec<EpisodeRecord>) -> Result<Self> {
        let reached: Vec<bool> = episodes.iter().map(|e| e.reached).collect();
        let sr = success_rate(&reached)?;
        let mnc = mean(&episodes.iter().map(|e| e.mnc).collect::<Vec<_>>());
        Ok(EvalReport { n_episodes: episodes.len(), sr, mnc, episodes })
    }

    pub fn trajectories(&self) -> Vec<&[StateVec]> {
        self.episodes.iter().map(|e| e.states.as_slice()).collect()
    }
}

struct Live {
    env: Box<dyn Env>,
    rng: Rng,
    prompt: PromptSpec,
    states: Vec<StateVec>,
    actions: Vec<ActionVec>,
    done: bool,
    reached: bool,
}

pub type EnvFactory<'a> = dyn Fn() -> reachavoid_core::Result<Box<dyn Env>> + 'a;

/// Runs `cfg.n_episodes` episodes with a fresh reset each. Prompts always
/// carry `z = 1`, the environment's goal and the episode's boxes.
pub fn evaluate(make_env: &EnvFactory, policy: &mut dyn Policy, cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.n_episodes == 0 {
        return Err(EvalError::arg("n_episodes must be at least 1"));
    }
    let mut live = Vec::with_capacity(cfg.n_episodes);
    for i in 0..cfg.n_episodes {
        let mut env = make_env()?;
        let mut rng = child_rng(cfg.seed, "eval-episode", i as u64);
        let s0 = env.reset(&mut rng);
        let boxes = cfg.fixed_boxes.clone().unwrap_or_else(|| env.avoid_boxes().to_vec());
        let prompt = PromptSpec::new(true, boxes, env.goal())?;
        live.push(Live { env, rng, prompt, states: vec![s0], actions: Vec::new(), done: false, reached: false });
    }
    let mut prng = child_rng(cfg.seed, "eval-policy", 0);
    loop {
        let active: Vec<usize> = (0..live.len()).filter(|&i| !live[i].done).collect();
        if active.is_empty() {
            break;
        }
        let acts = {
            let items: Vec<SeqItem> = active
                .iter()
                .map(|&i| SeqItem { prompt: &live[i].prompt, states: &live[i].states, actions: &live[i].actions })
                .collect();
            let envs: Vec<&dyn Env> = active.iter().map(|&i| live[i].env.as_ref()).collect();
            policy.act(&items, &envs, &mut prng)?
        };
        if acts.len() != active.len() {
            return Err(EvalError::arg(format!("policy returned {} actions for {} episodes", acts.len(), active.len())));
        }
        for (&i, a) in active.iter().zip(acts) {
            let ep = &mut live[i];
            let o = ep.env.step(&a, &mut ep.rng)?;
            ep.states.push(o.state);
            ep.actions.push(a);
            if o.done {
                ep.done = true;
                ep.reached = o.reached;
            }
        }
    }
    let mut episodes = Vec::with_capacity(live.len());
    for (i, ep) in live.into_iter().enumerate() {
        let boxes = ep.prompt.boxes;
        let mut cost = 0;
        for s in &ep.states[1..] {
            cost += step_cost(s, &boxes)?;
        }
        episodes.push(EpisodeRecord {
            index: i,
            seed: derive(cfg.seed, "eval-episode", i as u64),
            length: ep.states.len() - 1,
            cost,
            mnc: mnc(&ep.states, &boxes)?,
            reached: ep.reached,
            boxes,
            states: ep.states,
            actions: ep.actions,
        });
    }
    EvalReport::from_episodes(episodes)
}
