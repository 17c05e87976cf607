//! Experiment runner for the adaptive-preconditioning library: TOML configs,
//! parallel seeded runs, CSV trajectories and summaries.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use error::{CliError, CliResult};
