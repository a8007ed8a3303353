//! Command-line pipelines: data generation, relabeling, training,
//! evaluation sweeps and the Boolean-network case study.

pub mod commands;
pub mod config;
pub mod error;
pub mod sweep;

pub use config::{load_config, parse_config, EnvKind, Profile, RunConfig};
pub use error::{CliError, Result, EXIT_CONFIG, EXIT_RUNTIME};
