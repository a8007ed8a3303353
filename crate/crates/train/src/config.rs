use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    /// Linear warmup, then constant.
    LambdalrWarmup,
    /// Linear warmup then cosine decay to zero inside every cycle.
    CosineWarmRestarts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub scheduler: Scheduler,
    pub warmup_steps: usize,
    pub t_0: usize,
    pub t_mult: usize,
    pub weight_decay: f64,
    /// Weight of the avoid-awareness loss.
    pub alpha: f64,
    pub total_steps: usize,
    pub checkpoint_every: usize,
    pub eval_episodes: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            learning_rate: 1e-4,
            scheduler: Scheduler::LambdalrWarmup,
            warmup_steps: 500,
            t_0: 1000,
            t_mult: 1,
            weight_decay: 1e-4,
            alpha: 1.0,
            total_steps: 5000,
            checkpoint_every: 500,
            eval_episodes: 60,
            grad_clip: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 || self.total_steps == 0 || self.checkpoint_every == 0 || self.eval_episodes == 0 {
            return bad("batch_size, total_steps, checkpoint_every and eval_episodes must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.alpha >= 0.0) || !(self.weight_decay >= 0.0) || !(self.grad_clip >= 0.0) {
            return bad("alpha, weight_decay and grad_clip must be non-negative");
        }
        if self.scheduler == Scheduler::CosineWarmRestarts && (self.t_0 == 0 || self.t_mult == 0 || self.warmup_steps >= self.t_0) {
            return bad("cosine restarts need t_0 > warmup_steps and t_mult >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("betas must lie in [0, 1) and adam_eps must be positive");
        }
        Ok(())
    }
}

/// Learning rate used at (zero-based) `step`.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    let max = cfg.learning_rate;
    match cfg.scheduler {
        Scheduler::LambdalrWarmup => {
            if cfg.warmup_steps == 0 || step >= cfg.warmup_steps {
                max
            } else {
                max * step as f64 / cfg.warmup_steps as f64
            }
        }
        Scheduler::CosineWarmRestarts => {
            let (mut pos, mut len) = (step, cfg.t_0.max(1));
            while pos >= len {
                pos -= len;
                len = len.saturating_mul(cfg.t_mult.max(1));
            }
            let warm = cfg.warmup_steps.min(len - 1);
            if pos < warm {
                max * pos as f64 / warm as f64
            } else {
                let frac = (pos - warm) as f64 / (len - warm) as f64;
                max * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}
