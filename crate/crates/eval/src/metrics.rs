//! Per-episode cost and visitation metrics.

use reachavoid_core::{box_contains, AvoidBox, StateVec};

use crate::error::{EvalError, Result};

/// 1 if `s_next` lies inside any box, else 0.
pub fn step_cost(s_next: &StateVec, boxes: &[AvoidBox]) -> Result<u32> {
    for b in boxes {
        if box_contains(b, s_next)? {
            return Ok(1);
        }
    }
    Ok(0)
}

/// Mean cost over transitions. States `s_2..s_T` are charged; the start state
/// is not. A single-state trajectory has no transitions and cost 0.
pub fn mnc(states: &[StateVec], boxes: &[AvoidBox]) -> Result<f64> {
    if states.is_empty() {
        return Err(EvalError::arg("mnc of an empty trajectory"));
    }
    let transitions = states.len() - 1;
    if transitions == 0 {
        return Ok(0.0);
    }
    let mut cost = 0u32;
    for s in &states[1..] {
        cost += step_cost(s, boxes)?;
    }
    Ok(f64::from(cost) / transitions as f64)
}

/// Fraction of episodes that reached the goal.
pub fn success_rate(reached: &[bool]) -> Result<f64> {
    if reached.is_empty() {
        return Err(EvalError::arg("success rate of zero episodes"));
    }
    Ok(reached.iter().filter(|&&r| r).count() as f64 / reached.len() as f64)
}

/// Fraction of trajectories that contain `s` (exact match).
pub fn percent_visited<T: AsRef<[StateVec]>>(trajs: &[T], s: &StateVec) -> Result<f64> {
    if trajs.is_empty() {
        return Err(EvalError::arg("percent_visited over zero trajectories"));
    }
    let hits = trajs.iter().filter(|t| t.as_ref().contains(s)).count();
    Ok(hits as f64 / trajs.len() as f64)
}

/// Merges runs of identical consecutive states.
pub fn collapse_trajectory(states: &[StateVec]) -> Vec<StateVec> {
    let mut out: Vec<StateVec> = Vec::with_capacity(states.len());
    for s in states {
        if out.last() != Some(s) {
            out.push(s.clone());
        }
    }
    out
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}
