//! Experiment runner behind the `ldrld` binary: config loading, the
//! train/distill/sweep workflows, reports, and the loss self-checks.

pub mod commands;
pub mod config;
pub mod error;
pub mod losscheck;
pub mod report;
pub mod sweep;

pub use config::{ExperimentConfig, Splits};
pub use error::{CliError, Result};
