//! Exact planner for small Boolean-network environments.
//!
//! Transition distributions of "flip gene g, then k asynchronous updates" are
//! enumerated exactly. Value iteration then minimises expected steps to the
//! goal plus a large penalty per transition into an avoided state, so the
//! planner only accepts a violation when no avoiding route exists. It serves
//! as a reference policy for case-study mechanics that must not depend on
//! training quality.

use std::collections::{BTreeMap, HashMap};

use reachavoid_core::envs::{BooleanNetwork, Env};
use reachavoid_core::seed::Rng;
use reachavoid_core::{box_contains, ActionVec, StateVec};
use reachavoid_nn::SeqItem;

use crate::error::{EvalError, Result};
use crate::rollout::Policy;

pub const MAX_PLANNER_GENES: usize = 12;

const DISCOUNT: f64 = 0.999;

pub struct ExactPlanner {
    net: BooleanNetwork,
    n: usize,
    avoid_penalty: f64,
    /// `trans[s * n + g]`: next-state distribution after flipping `g` in `s`.
    trans: Vec<Vec<(u32, f64)>>,
    plans: HashMap<(u32, Vec<u32>), Vec<usize>>,
}

impl ExactPlanner {
    pub fn new(net: BooleanNetwork, k: usize, avoid_penalty: f64) -> Result<Self> {
        let n = net.n_genes();
        if n == 0 || n > MAX_PLANNER_GENES {
            return Err(EvalError::arg(format!("exact planning supports 1..={MAX_PLANNER_GENES} genes, got {n}")));
        }
        let mut trans = Vec::with_capacity((1 << n) * n);
        for s in 0..1u32 << n {
            for g in 0..n {
                let mut dist: BTreeMap<u32, f64> = BTreeMap::from([(s ^ 1 << g, 1.0)]);
                for _ in 0..k {
                    let mut next = BTreeMap::new();
                    for (&x, &p) in &dist {
                        for j in 0..n {
                            *next.entry(net.update_gene(x, j)).or_insert(0.0) += p / n as f64;
                        }
                    }
                    dist = next;
                }
                trans.push(dist.into_iter().collect());
            }
        }
        Ok(ExactPlanner { net, n, avoid_penalty, trans, plans: HashMap::new() })
    }

    pub fn network(&self) -> &BooleanNetwork {
        &self.net
    }

    /// Next-state distribution of flipping `gene` in `state`.
    pub fn transition(&self, state: u32, gene: usize) -> &[(u32, f64)] {
        &self.trans[state as usize * self.n + gene]
    }

    /// Best gene to flip in every state, for this goal and avoid set.
    pub fn plan(&mut self, goal: u32, avoid: &[u32]) -> &[usize] {
        let key = (goal, avoid.to_vec());
        if !self.plans.contains_key(&key) {
            let table = self.solve(goal, avoid);
            self.plans.insert(key.clone(), table);
        }
        &self.plans[&key]
    }

    fn q_values(&self, s: u32, v: &[f64], goal: u32, bad: &[bool]) -> Vec<f64> {
        (0..self.n)
            .map(|g| {
                self.transition(s, g)
                    .iter()
                    .map(|&(y, p)| {
                        let future = if y == goal { 0.0 } else { DISCOUNT * v[y as usize] };
                        p * (1.0 + if bad[y as usize] { self.avoid_penalty } else { 0.0 } + future)
                    })
                    .sum()
            })
            .collect()
    }

    fn solve(&self, goal: u32, avoid: &[u32]) -> Vec<usize> {
        let size = 1usize << self.n;
        let mut bad = vec![false; size];
        for &a in avoid {
            bad[a as usize] = true;
        }
        let mut v = vec![0.0; size];
        for _ in 0..100_000 {
            let mut delta: f64 = 0.0;
            for s in 0..size as u32 {
                if s == goal {
                    continue;
                }
                let best = self.q_values(s, &v, goal, &bad).into_iter().fold(f64::INFINITY, f64::min);
                delta = delta.max((best - v[s as usize]).abs());
                v[s as usize] = best;
            }
            if delta < 1e-12 {
                break;
            }
        }
        (0..size as u32)
            .map(|s| {
                let q = self.q_values(s, &v, goal, &bad);
                let best = q.iter().copied().fold(f64::INFINITY, f64::min);
                // Lowest gene index among near-ties keeps the choice deterministic.
                q.iter().position(|&x| x <= best + 1e-9 * (1.0 + best.abs())).unwrap_or(0)
            })
            .collect()
    }
}

impl Policy for ExactPlanner {
    fn act(&mut self, items: &[SeqItem], _envs: &[&dyn Env], _rng: &mut Rng) -> Result<Vec<ActionVec>> {
        let mut out = Vec::with_capacity(items.len());
        for it in items {
            let state = self.net.from_slice(it.states.last().expect("non-empty history"))?;
            let goal = self.net.from_slice(&it.prompt.goal)?;
            let mut avoid = Vec::new();
            for x in 0..1u32 << self.n {
                let sv = StateVec(self.net.to_vec(x));
                for b in &it.prompt.boxes {
                    if box_contains(b, &sv)? {
                        avoid.push(x);
                        break;
                    }
                }
            }
            let g = self.plan(goal, &avoid)[state as usize];
            out.push(ActionVec((0..self.n).map(|i| if i == g { 1.0 } else { 0.0 }).collect()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_rows_are_distributions() {
        let net = BooleanNetwork::parse("a := b\nb := a\nc := c").unwrap();
        let p = ExactPlanner::new(net, 3, 100.0).unwrap();
        for s in 0..8 {
            for g in 0..3 {
                let total: f64 = p.transition(s, g).iter().map(|x| x.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
        // Flipping c is deterministic: c := c.
        assert_eq!(p.transition(0, 2), &[(0b100, 1.0)]);
    }

    #[test]
    fn planner_goes_straight_when_nothing_is_avoided() {
        let net = BooleanNetwork::parse("a := a\nb := b").unwrap();
        let mut p = ExactPlanner::new(net, 2, 100.0).unwrap();
        let plan = p.plan(0b11, &[]).to_vec();
        // From 00 either flip is optimal; the lowest index wins.
        assert_eq!(plan[0b00], 0);
        assert_eq!(plan[0b01], 1);
        assert_eq!(plan[0b10], 0);
        // Avoiding 01 forces the route through 10.
        let plan = p.plan(0b11, &[0b01]).to_vec();
        assert_eq!(plan[0b00], 1);
    }

    #[test]
    fn too_many_genes_is_rejected() {
        let rules: String = (0..13).map(|i| format!("g{i} := g{i}\n")).collect();
        let net = BooleanNetwork::parse(&rules).unwrap();
        assert!(ExactPlanner::new(net, 1, 1.0).is_err());
    }
}
