//! Config-driven experiments on top of `udsgd-core`: parsing, orchestration and
//! CSV artifacts.

pub mod build;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind};
pub use error::LabError;
pub use experiments::{analyze, diagnose, run_experiment, Outcome, VariantSummary};
