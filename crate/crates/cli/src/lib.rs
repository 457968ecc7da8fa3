//! Command-line driver for the attack and defense pipeline.

pub mod cli;
pub mod config;
pub mod error;
pub mod provenance;
pub mod stages;
pub mod tables;

pub use cli::run;
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use stages::Pipeline;
