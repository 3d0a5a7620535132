//! Config-driven experiment runner for the Meta-SGLD bound laboratory.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod table;

pub use config::{load_config, parse_config, ExperimentConfig, Mode};
pub use experiment::{compare_splits, run_experiment, SplitSummary};
