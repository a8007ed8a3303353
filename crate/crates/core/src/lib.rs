//! Core data model and data-generation machinery for reach-avoid learning.
//!
//! * [`traj`]: states, actions, trajectories, avoid boxes and prompts.
//! * [`dataset`]: the JSON Lines dataset format.
//! * [`envs`]: the point-reach, U-maze and Boolean-network environments.
//! * [`relabel`]: hindsight goal and avoid-region relabeling.

pub mod dataset;
pub mod envs;
pub mod error;
pub mod relabel;
pub mod seed;
pub mod traj;

pub use error::{CoreError, Result};
pub use traj::{
    avoid_success, box_contains, per_step_violation, ActionVec, AvoidBox, EpisodeMeta,
    LabeledTrajectory, PairedDataset, PromptSpec, StateVec, Trajectory,
};
