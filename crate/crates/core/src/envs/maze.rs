//! Point mass in a U-maze with hard walls and soft circular avoid regions.
//!
//! State is `(x, y, vx, vy)`. Cell `(r, c)` of the layout covers
//! `x in [c, c+1]`, `y in [r, r+1]`. Avoid circles are exposed to the prompt
//! as their circumscribing boxes; the velocity dimensions of those boxes span
//! the full velocity range.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{clip_unit, distance, Env, EnvSpec, StepOutcome};
use crate::error::{check_dim, CoreError, Result};
use crate::seed::Rng;
use crate::traj::{ActionVec, AvoidBox, StateVec};

const WALL_MARGIN: f64 = 1e-6;
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Occupancy grid; `true` marks a wall cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeLayout {
    walls: Vec<Vec<bool>>,
}

impl MazeLayout {
    /// Rows of `1` (wall) and `0` (free), top row first.
    pub fn parse(rows: &[String]) -> Result<Self> {
        let width = rows.first().map(String::len).unwrap_or(0);
        if width == 0 {
            return Err(CoreError::arg("maze layout is empty"));
        }
        let walls = rows
            .iter()
            .map(|r| {
                if r.len() != width {
                    return Err(CoreError::arg("maze layout rows differ in length"));
                }
                r.chars()
                    .map(|c| match c {
                        '1' => Ok(true),
                        '0' => Ok(false),
                        other => Err(CoreError::arg(format!("invalid maze cell {other:?}"))),
                    })
                    .collect()
            })
            .collect::<Result<Vec<Vec<bool>>>>()?;
        let layout = MazeLayout { walls };
        if layout.free_cells().is_empty() {
            return Err(CoreError::arg("maze layout has no free cell"));
        }
        Ok(layout)
    }

    pub fn u_maze() -> Self {
        MazeLayout::parse(&default_layout()).expect("built-in layout")
    }

    pub fn rows(&self) -> usize {
        self.walls.len()
    }

    pub fn cols(&self) -> usize {
        self.walls[0].len()
    }

    /// Points outside the grid count as walls.
    pub fn is_wall(&self, x: f64, y: f64) -> bool {
        if !(x >= 0.0 && y >= 0.0) {
            return true;
        }
        let (c, r) = (x.floor() as usize, y.floor() as usize);
        r >= self.rows() || c >= self.cols() || self.walls[r][c]
    }

    /// Free cells as `(row, col)`.
    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, row) in self.walls.iter().enumerate() {
            for (c, &w) in row.iter().enumerate() {
                if !w {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Uniform point inside a uniformly chosen free cell.
    pub fn sample_free(&self, rng: &mut Rng, margin: f64) -> [f64; 2] {
        let cells = self.free_cells();
        let (r, c) = cells[rng.random_range(0..cells.len())];
        [
            c as f64 + rng.random_range(margin..=1.0 - margin),
            r as f64 + rng.random_range(margin..=1.0 - margin),
        ]
    }
}

pub fn default_layout() -> Vec<String> {
    ["11111", "10001", "11101", "10001", "11111"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MazeConfig {
    pub layout: Vec<String>,
    pub dt: f64,
    pub damping: f64,
    pub accel: f64,
    pub vmax: f64,
    pub goal_tolerance: f64,
    pub max_episode_steps: usize,
    pub avoid_radius: f64,
    pub n_avoid: usize,
}

impl Default for MazeConfig {
    fn default() -> Self {
        MazeConfig {
            layout: default_layout(),
            dt: 0.1,
            damping: 0.9,
            accel: 1.0,
            vmax: 2.0,
            goal_tolerance: 0.45,
            max_episode_steps: 300,
            avoid_radius: 0.2,
            n_avoid: 1,
        }
    }
}

impl MazeConfig {
    pub fn validate(&self) -> Result<()> {
        MazeLayout::parse(&self.layout)?;
        if !(self.dt > 0.0 && self.vmax > 0.0 && self.accel >= 0.0) {
            return Err(CoreError::arg("maze dt and vmax must be positive, accel non-negative"));
        }
        if !(self.vmax * self.dt < 1.0) {
            return Err(CoreError::arg("maze vmax * dt must be below one cell per step"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(CoreError::arg("maze damping must lie in [0, 1)"));
        }
        if !(self.goal_tolerance > 0.0 && self.avoid_radius >= 0.0) || self.max_episode_steps == 0 {
            return Err(CoreError::arg("invalid maze goal tolerance, avoid radius or step limit"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvoidCircle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct MazeEnv {
    cfg: MazeConfig,
    layout: MazeLayout,
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    circles: Vec<AvoidCircle>,
    boxes: Vec<AvoidBox>,
    steps: usize,
}

impl MazeEnv {
    pub fn new(cfg: MazeConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = MazeLayout::parse(&cfg.layout)?;
        let spec = EnvSpec {
            env_id: "maze".into(),
            d_s: 4,
            d_a: 2,
            max_episode_steps: cfg.max_episode_steps,
            goal_tolerance: cfg.goal_tolerance,
            state_bounds: vec![
                (0.0, layout.cols() as f64),
                (0.0, layout.rows() as f64),
                (-cfg.vmax, cfg.vmax),
                (-cfg.vmax, cfg.vmax),
            ],
        };
        let (r, c) = layout.free_cells()[0];
        let start = [c as f64 + 0.5, r as f64 + 0.5];
        Ok(MazeEnv {
            cfg,
            layout,
            spec,
            pos: start,
            vel: [0.0; 2],
            goal: start,
            circles: Vec::new(),
            boxes: Vec::new(),
            steps: 0,
        })
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    pub fn circles(&self) -> &[AvoidCircle] {
        &self.circles
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.vel
    }

    /// Prompt box of a circle: the circumscribing square in position, full range in velocity.
    pub fn circle_box(&self, c: &AvoidCircle) -> AvoidBox {
        let v = self.cfg.vmax;
        AvoidBox::new(
            vec![c.center[0] - c.radius, c.center[1] - c.radius, -v, -v],
            vec![c.center[0] + c.radius, c.center[1] + c.radius, v, v],
        )
        .expect("radius is non-negative")
    }

    /// Places the agent, goal and avoid circles explicitly. The start must be in free space.
    pub fn set_episode(&mut self, pos: [f64; 2], goal: [f64; 2], circles: Vec<AvoidCircle>) -> Result<()> {
        if self.layout.is_wall(pos[0], pos[1]) {
            return Err(CoreError::arg("maze start lies inside a wall"));
        }
        self.pos = pos;
        self.vel = [0.0; 2];
        self.goal = goal;
        self.boxes = circles.iter().map(|c| self.circle_box(c)).collect();
        self.circles = circles;
        self.steps = 0;
        Ok(())
    }

    fn move_axis(&mut self, axis: usize, delta: f64) {
        let old = self.pos[axis];
        let mut probe = self.pos;
        probe[axis] = old + delta;
        if self.layout.is_wall(probe[0], probe[1]) {
            let cell = old.floor();
            self.pos[axis] = if delta > 0.0 { cell + 1.0 - WALL_MARGIN } else { cell + WALL_MARGIN };
            self.vel[axis] = 0.0;
        } else {
            self.pos[axis] = probe[axis];
        }
    }
}

impl Env for MazeEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> StateVec {
        self.pos = self.layout.sample_free(rng, 0.1);
        self.vel = [0.0; 2];
        self.goal = self.layout.sample_free(rng, 0.1);
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            if distance(&self.pos, &self.goal) > self.cfg.goal_tolerance {
                break;
            }
            self.goal = self.layout.sample_free(rng, 0.1);
        }
        let r = self.cfg.avoid_radius;
        self.circles.clear();
        for _ in 0..self.cfg.n_avoid {
            let mut center = self.layout.sample_free(rng, 0.0);
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let clear = |p: &[f64; 2]| (p[0] - center[0]).abs() > r || (p[1] - center[1]).abs() > r;
                if clear(&self.pos) && clear(&self.goal) {
                    break;
                }
                center = self.layout.sample_free(rng, 0.0);
            }
            self.circles.push(AvoidCircle { center, radius: r });
        }
        self.boxes = self.circles.iter().map(|c| self.circle_box(c)).collect();
        self.steps = 0;
        self.state()
    }

    fn state(&self) -> StateVec {
        StateVec(vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]])
    }

    fn goal(&self) -> StateVec {
        StateVec(vec![self.goal[0], self.goal[1], 0.0, 0.0])
    }

    fn avoid_boxes(&self) -> &[AvoidBox] {
        &self.boxes
    }

    fn step_count(&self) -> usize {
        self.steps
    }

    fn step(&mut self, action: &[f64], _rng: &mut Rng) -> Result<StepOutcome> {
        check_dim(2, action.len())?;
        for i in 0..2 {
            let v = self.cfg.damping * self.vel[i] + self.cfg.accel * clip_unit(action[i]);
            self.vel[i] = v.clamp(-self.cfg.vmax, self.cfg.vmax);
        }
        let (dx, dy) = (self.vel[0] * self.cfg.dt, self.vel[1] * self.cfg.dt);
        self.move_axis(0, dx);
        self.move_axis(1, dy);
        self.steps += 1;
        let reached = distance(&self.pos, &self.goal) <= self.cfg.goal_tolerance;
        Ok(StepOutcome {
            state: self.state(),
            reached,
            done: reached || self.steps >= self.cfg.max_episode_steps,
        })
    }

    fn sample_action(&self, rng: &mut Rng) -> ActionVec {
        ActionVec((0..2).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn env() -> MazeEnv {
        MazeEnv::new(MazeConfig::default()).unwrap()
    }

    #[test]
    fn wall_blocks_motion() {
        let mut e = env();
        // Cell (1,1) is free; the wall column x < 1 lies to its left.
        e.set_episode([1.05, 1.5], [3.5, 3.5], vec![]).unwrap();
        let mut rng = rng_from(0);
        for _ in 0..20 {
            let o = e.step(&[-1.0, 0.0], &mut rng).unwrap();
            assert!(o.state[0] > 1.0);
            assert!(!e.layout().is_wall(o.state[0], o.state[1]));
        }
        assert_eq!(e.velocity()[0], 0.0);
    }

    #[test]
    fn avoid_circles_are_passable() {
        let mut e = env();
        let c = AvoidCircle { center: [2.0, 1.5], radius: 0.2 };
        e.set_episode([1.5, 1.5], [3.5, 1.5], vec![c]).unwrap();
        let b = e.avoid_boxes()[0].clone();
        let mut rng = rng_from(0);
        let mut inside = false;
        for _ in 0..10 {
            let o = e.step(&[1.0, 0.0], &mut rng).unwrap();
            inside |= b.contains(&o.state).unwrap();
        }
        assert!(inside);
    }

    #[test]
    fn velocity_decays_to_rest() {
        let mut e = env();
        e.set_episode([2.5, 1.5], [3.5, 3.5], vec![]).unwrap();
        let mut rng = rng_from(0);
        e.step(&[1.0, 1.0], &mut rng).unwrap();
        let mut n = 0;
        while e.velocity().iter().any(|v| v.abs() >= 1e-9) {
            e.step(&[0.0, 0.0], &mut rng).unwrap();
            n += 1;
            assert!(n < 1000, "velocity failed to decay");
        }
        let p = e.state();
        e.step(&[0.0, 0.0], &mut rng).unwrap();
        assert!(distance(&p[..2], &e.state()[..2]) < 1e-9);
    }

    #[test]
    fn random_walk_never_enters_walls() {
        let mut e = env();
        let mut rng = rng_from(3);
        for _ in 0..20 {
            e.reset(&mut rng);
            for _ in 0..300 {
                let a = e.sample_action(&mut rng);
                let o = e.step(&a, &mut rng).unwrap();
                assert!(!e.layout().is_wall(o.state[0], o.state[1]));
                if o.done {
                    break;
                }
            }
        }
    }

    #[test]
    fn reset_keeps_start_and_goal_out_of_avoid_boxes() {
        let mut e = env();
        let mut rng = rng_from(4);
        for _ in 0..200 {
            let s = e.reset(&mut rng);
            for b in e.avoid_boxes() {
                assert!(!b.contains(&s).unwrap());
                assert!(!b.contains(&e.goal()).unwrap());
                assert!((b.widths()[0] - 0.4).abs() < 1e-12);
            }
        }
    }
}
