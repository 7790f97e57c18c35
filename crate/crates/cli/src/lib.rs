//! Command-line harness for the action-detection context head: dataset
//! generation, training, evaluation, ablation sweeps and gradient checks.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod train;

pub use error::{CliError, CliResult};
