//! Run configuration: one TOML file layered over a named profile.
//!
//! The profile supplies every key, the file overrides any subset of them and
//! command-line flags override both. Unknown keys are rejected with their
//! full path.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use reachavoid_core::envs::{CardioConfig, CardioEnv, Env, MazeConfig, MazeEnv, ReachConfig, ReachEnv};
use reachavoid_core::relabel::{RelabelConfig, SamplerKind};
use reachavoid_nn::model::prompt_len;
use reachavoid_nn::ModelConfig;
use reachavoid_train::{Scheduler, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// States per sequence the desk models are sized for.
pub const DESK_CONTEXT_STATES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Reach,
    Maze,
    Cardio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Runs on one CPU core in minutes.
    Desk,
    /// Full-size models and long training runs.
    Paper,
    /// A few hundred steps on a tiny model, for pipeline checks.
    Smoke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub kind: EnvKind,
    pub reach: ReachConfig,
    pub maze: MazeConfig,
    pub cardio: CardioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Random-policy timesteps to generate.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_episodes: usize,
    /// Evaluation seeds per setting.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub n_episodes: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub env: EnvSection,
    pub data: DataSection,
    pub relabel: RelabelConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub study: StudySection,
}

impl RunConfig {
    pub fn profile(profile: Profile, kind: EnvKind) -> Self {
        let reach = ReachConfig { max_episode_steps: 30, ..ReachConfig::default() };
        let maze = MazeConfig { max_episode_steps: 100, ..MazeConfig::default() };
        let cardio = CardioConfig::default();
        let relabel = match kind {
            EnvKind::Reach => RelabelConfig { sampler: SamplerKind::Contour, ..RelabelConfig::default() },
            EnvKind::Maze => RelabelConfig {
                sampler: SamplerKind::Contour,
                n_avoid: 3,
                w_max: 0.5,
                box_dims: Some(vec![0, 1]),
                ..RelabelConfig::default()
            },
            EnvKind::Cardio => RelabelConfig { sampler: SamplerKind::DiscreteTopK, n_avoid: 3, ..RelabelConfig::default() },
        };
        let mut env = EnvSection { kind, reach, maze, cardio };
        let spec = build_env(&env).expect("profile environments are valid").spec().clone();
        let mut model = ModelConfig::new(spec.d_s, spec.d_a);
        model.state_shift = spec.state_bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        model.state_scale = spec.state_bounds.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect();
        model.max_seq_len = prompt_len(relabel.n_avoid) + 2 * DESK_CONTEXT_STATES;
        let mut train = TrainConfig::default();
        let steps = match kind {
            EnvKind::Reach => 30_000,
            EnvKind::Maze => 50_000,
            EnvKind::Cardio => 60_000,
        };
        let mut data = DataSection { steps };
        let mut eval = EvalSection { n_episodes: 60, seeds: 1 };
        let study = StudySection { n_episodes: 200, epsilon: 0.001 };
        match profile {
            Profile::Desk => {
                // One cosine cycle over the whole run. Without dropout the
                // small model fits the sparse action signal far better.
                model.dropout = 0.0;
                train.learning_rate = 5e-4;
                train.scheduler = Scheduler::CosineWarmRestarts;
                train.t_0 = train.total_steps;
            }
            Profile::Paper => {
                data.steps = match kind {
                    EnvKind::Reach => 2_000_000,
                    _ => data.steps,
                };
                let (heads, layers, adelta) = match kind {
                    EnvKind::Reach => (4, 4, 2.0),
                    _ => (6, 6, 1.0),
                };
                model.n_head = heads;
                model.n_layer = layers;
                model.embed_dim = 64 * heads;
                model.adelta = adelta;
                env.reach.max_episode_steps = 50;
                env.maze.max_episode_steps = 300;
                train.learning_rate = 1e-4;
                train.total_steps = 50_000;
                match kind {
                    EnvKind::Reach => {
                        train.batch_size = 128;
                        train.scheduler = Scheduler::CosineWarmRestarts;
                        train.t_0 = 1000;
                        train.warmup_steps = 500;
                    }
                    EnvKind::Maze => {
                        train.batch_size = 32;
                        train.warmup_steps = 1000;
                    }
                    EnvKind::Cardio => {
                        train.batch_size = 128;
                        train.warmup_steps = 1000;
                    }
                }
                eval.seeds = 3;
            }
            Profile::Smoke => {
                data.steps = 2000;
                model.n_layer = 1;
                model.embed_dim = 32;
                train.learning_rate = 1e-3;
                train.warmup_steps = 20;
                train.total_steps = 200;
                train.checkpoint_every = 100;
                train.eval_episodes = 8;
                eval.n_episodes = 8;
            }
        }
        RunConfig { seed: 0, out: PathBuf::from("runs"), env, data, relabel, model, train, eval, study }
    }

    /// Cross-section checks; run before any work starts.
    pub fn validate(&self) -> Result<()> {
        let spec = build_env(&self.env).map_err(|e| CliError::Config(format!("env: {e}")))?.spec().clone();
        let m = &self.model;
        if m.d_s != spec.d_s || m.d_a != spec.d_a {
            return Err(CliError::Config(format!(
                "model dims (d_s {}, d_a {}) disagree with env {} (d_s {}, d_a {})",
                m.d_s, m.d_a, spec.env_id, spec.d_s, spec.d_a
            )));
        }
        m.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        if m.max_seq_len < prompt_len(self.relabel.n_avoid) + 1 {
            return Err(CliError::Config(format!(
                "model.max_seq_len {} cannot hold a prompt with {} boxes",
                m.max_seq_len, self.relabel.n_avoid
            )));
        }
        self.relabel.validate(spec.d_s).map_err(|e| CliError::Config(format!("relabel: {e}")))?;
        self.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        if self.data.steps == 0 {
            return Err(CliError::Config("data.steps must be at least 1".into()));
        }
        if self.eval.n_episodes == 0 || self.eval.seeds == 0 || self.study.n_episodes == 0 {
            return Err(CliError::Config("eval.n_episodes, eval.seeds and study.n_episodes must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

pub fn build_env(env: &EnvSection) -> reachavoid_core::Result<Box<dyn Env>> {
    Ok(match env.kind {
        EnvKind::Reach => Box::new(ReachEnv::new(env.reach.clone())?),
        EnvKind::Maze => Box::new(MazeEnv::new(env.maze.clone())?),
        EnvKind::Cardio => Box::new(CardioEnv::new(env.cardio.clone())?),
    })
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Layers `text` over the profile for the environment it names
/// (`env.kind`, default reach) and validates the result.
pub fn parse_config(text: &str, profile: Profile) -> Result<RunConfig> {
    let file: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    let kind = match file.get("env").and_then(|e| e.get("kind")) {
        None => EnvKind::Reach,
        Some(v) => EnvKind::deserialize(v.clone()).map_err(|e| CliError::Config(format!("env.kind: {}", e.message())))?,
    };
    let mut merged = toml::Value::try_from(RunConfig::profile(profile, kind)).expect("profile serializes");
    merge(&mut merged, toml::Value::Table(file));
    let cfg: RunConfig = serde_path_to_error::deserialize(merged).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner().message()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, profile: Profile) -> Result<RunConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config(&text, profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_profile_validates() {
        for p in [Profile::Desk, Profile::Paper, Profile::Smoke] {
            for k in [EnvKind::Reach, EnvKind::Maze, EnvKind::Cardio] {
                RunConfig::profile(p, k).validate().unwrap();
            }
        }
    }

    #[test]
    fn file_values_override_the_profile() {
        let cfg = parse_config("seed = 7\n[train]\ntotal_steps = 40\n", Profile::Desk).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.total_steps, 40);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn env_kind_selects_the_profile() {
        let cfg = parse_config("[env]\nkind = \"cardio\"\n", Profile::Desk).unwrap();
        assert_eq!(cfg.model.d_s, 15);
        assert_eq!(cfg.relabel.n_avoid, 3);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let err = parse_config("[train]\nbatchsize = 3\n", Profile::Desk).unwrap_err();
        assert!(err.to_string().contains("train"), "{err}");
        assert!(err.to_string().contains("batchsize"), "{err}");
        let err = parse_config("[env.reach]\nbox_width = \"wide\"\n", Profile::Desk).unwrap_err();
        assert!(err.to_string().contains("env.reach.box_width"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = parse_config("[model]\nd_s = 4\n", Profile::Desk).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::profile(Profile::Desk, EnvKind::Reach);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
