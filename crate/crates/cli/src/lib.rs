//! Command implementations behind the `recdenoise` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::*;
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
