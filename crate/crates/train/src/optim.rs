//! AdamW with decoupled weight decay and global-norm gradient clipping.

use std::path::Path;

use reachavoid_nn::checkpoint::{load_tensors, save_tensors};
use reachavoid_nn::{ParamId, ParamStore, Tensor};

use crate::config::TrainConfig;
use crate::error::{Result, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    clip: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(params: &ParamStore, cfg: &TrainConfig) -> Self {
        AdamW {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            clip: cfg.grad_clip,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update and returns the pre-clip global gradient norm.
    pub fn step(&mut self, params: &mut ParamStore, grads: &mut [Vec<f64>], lr: f64) -> f64 {
        let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if self.clip > 0.0 && norm > self.clip {
            let s = self.clip / norm;
            grads.iter_mut().flatten().for_each(|g| *g *= s);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let p = &mut params.get_mut(ParamId(i)).data;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let upd = (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps) + self.weight_decay * p[j];
                p[j] -= lr * upd;
            }
        }
        norm
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({ "kind": "adamw-state", "t": self.t });
        let owned: Vec<(String, Tensor)> = self
            .m
            .iter()
            .enumerate()
            .map(|(i, m)| (format!("m.{i}"), Tensor { shape: vec![m.len()], data: m.clone() }))
            .chain(self.v.iter().enumerate().map(|(i, v)| (format!("v.{i}"), Tensor { shape: vec![v.len()], data: v.clone() })))
            .collect();
        let refs: Vec<(&str, &Tensor)> = owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
        Ok(save_tensors(path, &meta, &refs)?)
    }

    /// Restores moments saved by [`AdamW::save`]; hyperparameters come from `cfg`.
    pub fn load(path: &Path, params: &ParamStore, cfg: &TrainConfig) -> Result<Self> {
        let (meta, tensors) = load_tensors(path)?;
        let t = meta.get("t").and_then(serde_json::Value::as_u64).ok_or_else(|| TrainError::Config("optimizer state lacks a step count".into()))?;
        let mut opt = AdamW::new(params, cfg);
        let n = params.len();
        if tensors.len() != 2 * n {
            return Err(TrainError::Config(format!("optimizer state has {} tensors, expected {}", tensors.len(), 2 * n)));
        }
        for (k, (_, tensor)) in tensors.into_iter().enumerate() {
            let slot = if k < n { &mut opt.m[k] } else { &mut opt.v[k - n] };
            if slot.len() != tensor.data.len() {
                return Err(TrainError::Config(format!("optimizer tensor {k} has the wrong size")));
            }
            *slot = tensor.data;
        }
        opt.t = t;
        Ok(opt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut p = ParamStore::new();
        p.add("w", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        p
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = store();
        let before = p.clone();
        let mut opt = AdamW::new(&p, &TrainConfig::default());
        for _ in 0..5 {
            let mut g = vec![vec![0.3, -1.0, 7.0]];
            opt.step(&mut p, &mut g, 0.0);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = store();
        let cfg = TrainConfig { weight_decay: 0.0, grad_clip: 0.0, ..Default::default() };
        let mut opt = AdamW::new(&p, &cfg);
        let mut g = vec![vec![0.5, -0.5, 2.0]];
        opt.step(&mut p, &mut g, 0.1);
        // Bias-corrected first Adam step is lr * sign(g).
        let d = &p.get(ParamId(0)).data;
        assert!((d[0] - 0.9).abs() < 1e-6 && (d[1] + 1.9).abs() < 1e-6 && (d[2] - 0.4).abs() < 1e-6);
    }

    #[test]
    fn clipping_reports_unclipped_norm() {
        let mut p = store();
        let mut opt = AdamW::new(&p, &TrainConfig::default());
        let mut g = vec![vec![3.0, 4.0, 0.0]];
        assert_eq!(opt.step(&mut p, &mut g, 0.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn state_round_trip() {
        let mut p = store();
        let cfg = TrainConfig::default();
        let mut opt = AdamW::new(&p, &cfg);
        opt.step(&mut p, &mut [vec![0.1, 0.2, 0.3]], 0.01);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("opt.bin");
        opt.save(&path).unwrap();
        assert_eq!(AdamW::load(&path, &p, &cfg).unwrap(), opt);
    }
}
