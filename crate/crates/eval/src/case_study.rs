//! Avoid-token case study on discrete environments.
//!
//! Phase 1 rolls out with no avoid boxes and ranks intermediate states by how
//! many trajectories visit them. Phase 2 repeats the same episodes with the
//! top state (or an explicit override) as an epsilon-box avoid token.

use reachavoid_core::envs::cardio::state_box;
use reachavoid_core::StateVec;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::metrics::{collapse_trajectory, mean, percent_visited};
use crate::rollout::{evaluate, EnvFactory, EvalConfig, EvalReport, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseStudyConfig {
    pub n_episodes: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Skip the ranking and avoid this state.
    pub avoid_override: Option<StateVec>,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        CaseStudyConfig { n_episodes: 200, seed: 0, epsilon: 0.001, avoid_override: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedState {
    pub state: StateVec,
    pub percent_visited: f64,
    /// Mean index of the first visit over the trajectories that visit it.
    pub mean_first_visit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub sr: f64,
    /// Percent visited of the avoid state; 0 when there is none.
    pub percent_visited: f64,
    /// Transitions per episode.
    pub mean_length: f64,
    /// Transitions per episode after merging repeated consecutive states.
    pub mean_collapsed_length: f64,
    /// States per episode equal to the avoid state, the start included.
    pub mean_steps_in_state: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub avoid_state: Option<StateVec>,
    pub from_override: bool,
    /// True when phase 1 visited no state besides the start and the goal.
    pub no_intermediate_state: bool,
    pub ranking: Vec<RankedState>,
    pub before: PhaseStats,
    pub after: Option<PhaseStats>,
}

/// Intermediate states ordered by visit share (descending), then by mean
/// first-visit index (ascending), then lexicographically.
pub fn rank_states(trajs: &[&[StateVec]], exclude: &[&StateVec]) -> Vec<RankedState> {
    let mut seen: Vec<(StateVec, usize, f64)> = Vec::new();
    for t in trajs {
        let mut firsts: Vec<(&StateVec, usize)> = Vec::new();
        for (i, s) in t.iter().enumerate() {
            if exclude.contains(&s) || firsts.iter().any(|(x, _)| *x == s) {
                continue;
            }
            firsts.push((s, i));
        }
        for (s, i) in firsts {
            match seen.iter_mut().find(|e| &e.0 == s) {
                Some(e) => {
                    e.1 += 1;
                    e.2 += i as f64;
                }
                None => seen.push((s.clone(), 1, i as f64)),
            }
        }
    }
    let n = trajs.len().max(1) as f64;
    let mut out: Vec<RankedState> = seen
        .into_iter()
        .map(|(state, c, sum)| RankedState { state, percent_visited: c as f64 / n, mean_first_visit: sum / c as f64 })
        .collect();
    out.sort_by(|a, b| {
        b.percent_visited
            .total_cmp(&a.percent_visited)
            .then(a.mean_first_visit.total_cmp(&b.mean_first_visit))
            .then_with(|| {
                a.state.iter().zip(b.state.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    out
}

pub fn phase_stats(report: &EvalReport, avoid: Option<&StateVec>) -> Result<PhaseStats> {
    let trajs = report.trajectories();
    let lengths: Vec<f64> = trajs.iter().map(|t| t.len() as f64 - 1.0).collect();
    let collapsed: Vec<f64> = trajs.iter().map(|t| collapse_trajectory(t).len() as f64 - 1.0).collect();
    let (pv, steps) = match avoid {
        Some(a) => {
            let steps: Vec<f64> = trajs.iter().map(|t| t.iter().filter(|s| *s == a).count() as f64).collect();
            (percent_visited(&trajs, a)?, mean(&steps))
        }
        None => (0.0, 0.0),
    };
    Ok(PhaseStats {
        sr: report.sr,
        percent_visited: pv,
        mean_length: mean(&lengths),
        mean_collapsed_length: mean(&collapsed),
        mean_steps_in_state: steps,
    })
}

/// Runs both phases. Every episode must start at the same state, which is
/// excluded from the ranking together with the goal.
pub fn cardio_case_study(make_env: &EnvFactory, policy: &mut dyn Policy, cfg: &CaseStudyConfig) -> Result<CaseReport> {
    let base = EvalConfig { n_episodes: cfg.n_episodes, seed: cfg.seed, fixed_boxes: Some(Vec::new()) };
    let phase1 = evaluate(make_env, policy, &base)?;
    let trajs = phase1.trajectories();
    let start = trajs[0][0].clone();
    if trajs.iter().any(|t| t[0] != start) {
        return Err(EvalError::arg("case study needs a fixed start state"));
    }
    let goal = make_env()?.goal();
    let ranking = rank_states(&trajs, &[&start, &goal]);
    let (avoid, from_override) = match &cfg.avoid_override {
        Some(s) => (Some(s.clone()), true),
        None => (ranking.first().map(|r| r.state.clone()), false),
    };
    let before = phase_stats(&phase1, avoid.as_ref())?;
    let after = match &avoid {
        Some(a) => {
            if a.len() != start.len() {
                return Err(EvalError::arg(format!("avoid state has {} entries, expected {}", a.len(), start.len())));
            }
            let cfg2 = EvalConfig { fixed_boxes: Some(vec![state_box(a, cfg.epsilon)]), ..base };
            let phase2 = evaluate(make_env, policy, &cfg2)?;
            Some(phase_stats(&phase2, Some(a))?)
        }
        None => None,
    };
    Ok(CaseReport {
        avoid_state: avoid,
        from_override,
        no_intermediate_state: ranking.is_empty(),
        ranking: ranking.into_iter().take(10).collect(),
        before,
        after,
    })
}
