//! Configuration-driven batch runner: reads an experiment config, executes
//! the requested stages and records every output in a manifest.

pub mod config;
pub mod generators;
pub mod manifest;
pub mod runner;

pub use config::{ExperimentConfig, Stage};
pub use runner::{RunOutcome, Runner};
