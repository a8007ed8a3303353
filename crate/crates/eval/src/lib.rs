//! Evaluation: rollouts, reach-avoid metrics and the avoid-token case study.

pub mod case_study;
pub mod error;
pub mod metrics;
pub mod planner;
pub mod rollout;
pub mod toy;

pub use case_study::{cardio_case_study, CaseReport, CaseStudyConfig, PhaseStats};
pub use error::{EvalError, Result};
pub use metrics::{collapse_trajectory, mean, mnc, percent_visited, std_dev, step_cost, success_rate};
pub use planner::ExactPlanner;
pub use rollout::{evaluate, EnvFactory, EpisodeRecord, EvalConfig, EvalReport, ModelPolicy, Policy, RandomPolicy};
