//! Point reach in a 3D workspace with passable avoid boxes.
//!
//! The end effector moves by `clip(action) * step_scale` per step and is
//! clamped to the workspace. Boxes never block motion.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{clip_unit, distance, Env, EnvSpec, StepOutcome};
use crate::error::{check_dim, CoreError, Result};
use crate::seed::Rng;
use crate::traj::{ActionVec, AvoidBox, StateVec};

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachConfig {
    pub low: f64,
    pub high: f64,
    pub step_scale: f64,
    pub goal_tolerance: f64,
    pub max_episode_steps: usize,
    pub box_width: f64,
    pub n_avoid: usize,
}

impl Default for ReachConfig {
    fn default() -> Self {
        ReachConfig {
            low: 0.0,
            high: 0.3,
            step_scale: 0.05,
            goal_tolerance: 0.05,
            max_episode_steps: 50,
            box_width: 0.16,
            n_avoid: 1,
        }
    }
}

impl ReachConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.low < self.high) {
            return Err(CoreError::arg("reach workspace needs low < high"));
        }
        if !(self.step_scale > 0.0) || !(self.goal_tolerance > 0.0) || !(self.box_width >= 0.0) {
            return Err(CoreError::arg("reach step_scale and goal_tolerance must be positive, box_width non-negative"));
        }
        if self.max_episode_steps == 0 {
            return Err(CoreError::arg("max_episode_steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReachEnv {
    cfg: ReachConfig,
    spec: EnvSpec,
    position: [f64; 3],
    goal: [f64; 3],
    boxes: Vec<AvoidBox>,
    steps: usize,
}

impl ReachEnv {
    pub fn new(cfg: ReachConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = EnvSpec {
            env_id: "reach".into(),
            d_s: 3,
            d_a: 3,
            max_episode_steps: cfg.max_episode_steps,
            goal_tolerance: cfg.goal_tolerance,
            state_bounds: vec![(cfg.low, cfg.high); 3],
        };
        let mid = 0.5 * (cfg.low + cfg.high);
        Ok(ReachEnv { cfg, spec, position: [mid; 3], goal: [mid; 3], boxes: Vec::new(), steps: 0 })
    }

    pub fn config(&self) -> &ReachConfig {
        &self.cfg
    }

    /// Places the agent, goal and boxes explicitly.
    pub fn set_episode(&mut self, position: [f64; 3], goal: [f64; 3], boxes: Vec<AvoidBox>) -> Result<()> {
        for b in &boxes {
            check_dim(3, b.dim())?;
        }
        self.position = position.map(|p| p.clamp(self.cfg.low, self.cfg.high));
        self.goal = goal;
        self.boxes = boxes;
        self.steps = 0;
        Ok(())
    }

    fn uniform_point(&self, rng: &mut Rng) -> [f64; 3] {
        [(); 3].map(|_| rng.random_range(self.cfg.low..=self.cfg.high))
    }
}

impl Env for ReachEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Start, goal and box centroids are uniform in the workspace. Goals
    /// closer than the tolerance are redrawn, and box centroids are redrawn
    /// until neither the start nor the goal lies inside the box.
    fn reset(&mut self, rng: &mut Rng) -> StateVec {
        self.position = self.uniform_point(rng);
        self.goal = self.uniform_point(rng);
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            if distance(&self.position, &self.goal) > self.cfg.goal_tolerance {
                break;
            }
            self.goal = self.uniform_point(rng);
        }
        self.boxes.clear();
        for _ in 0..self.cfg.n_avoid {
            let mut b = AvoidBox::from_centroid(&self.uniform_point(rng), self.cfg.box_width).expect("validated width");
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                if !b.contains_unchecked(&self.position) && !b.contains_unchecked(&self.goal) {
                    break;
                }
                b = AvoidBox::from_centroid(&self.uniform_point(rng), self.cfg.box_width).expect("validated width");
            }
            self.boxes.push(b);
        }
        self.steps = 0;
        self.state()
    }

    fn state(&self) -> StateVec {
        StateVec(self.position.to_vec())
    }

    fn goal(&self) -> StateVec {
        StateVec(self.goal.to_vec())
    }

    fn avoid_boxes(&self) -> &[AvoidBox] {
        &self.boxes
    }

    fn step_count(&self) -> usize {
        self.steps
    }

    fn step(&mut self, action: &[f64], _rng: &mut Rng) -> Result<StepOutcome> {
        check_dim(3, action.len())?;
        for (p, a) in self.position.iter_mut().zip(action) {
            *p = (*p + clip_unit(*a) * self.cfg.step_scale).clamp(self.cfg.low, self.cfg.high);
        }
        self.steps += 1;
        let reached = distance(&self.position, &self.goal) <= self.cfg.goal_tolerance;
        Ok(StepOutcome {
            state: self.state(),
            reached,
            done: reached || self.steps >= self.cfg.max_episode_steps,
        })
    }

    fn sample_action(&self, rng: &mut Rng) -> ActionVec {
        ActionVec((0..3).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn env() -> ReachEnv {
        ReachEnv::new(ReachConfig::default()).unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_in_bounds() {
        let mut a = env();
        let mut b = env();
        assert_eq!(a.reset(&mut rng_from(5)), b.reset(&mut rng_from(5)));
        assert_eq!(a.goal(), b.goal());
        assert_eq!(a.avoid_boxes(), b.avoid_boxes());
        let mut rng = rng_from(9);
        for _ in 0..1000 {
            a.reset(&mut rng);
            assert!(a.goal().iter().all(|g| (0.0..=0.3).contains(g)));
            let w = a.avoid_boxes()[0].widths();
            assert!(w.iter().all(|w| (w - 0.16).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_action_keeps_position() {
        let mut e = env();
        let mut rng = rng_from(1);
        let s0 = e.reset(&mut rng);
        let o = e.step(&[0.0, 0.0, 0.0], &mut rng).unwrap();
        assert_eq!(o.state, s0);
        assert_eq!(e.step_count(), 1);
    }

    #[test]
    fn boxes_are_passable() {
        let mut e = env();
        let b = AvoidBox::from_centroid(&[0.15, 0.15, 0.15], 0.16).unwrap();
        e.set_episode([0.0, 0.15, 0.15], [0.3, 0.15, 0.15], vec![b.clone()]).unwrap();
        let mut rng = rng_from(0);
        let mut inside = false;
        for _ in 0..4 {
            let o = e.step(&[1.0, 0.0, 0.0], &mut rng).unwrap();
            inside |= b.contains(&o.state).unwrap();
        }
        assert!(inside);
    }

    #[test]
    fn straight_line_reaches_within_closed_form_bound() {
        let mut e = env();
        let mut rng = rng_from(0);
        e.set_episode([0.0, 0.1, 0.1], [0.27, 0.1, 0.1], vec![]).unwrap();
        let bound = ((0.27f64 - 0.05) / 0.05).ceil() as usize;
        let mut steps = 0;
        loop {
            let o = e.step(&[1.0, 0.0, 0.0], &mut rng).unwrap();
            steps += 1;
            if o.done {
                assert!(o.reached);
                break;
            }
        }
        assert!(steps <= bound);
    }
}
