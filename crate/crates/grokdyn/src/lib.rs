//! Experiment runner for `grokdyn-core`: configuration, artifacts on disk
//! and SVG plots.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod plot;
pub mod run;

pub use config::{resolve, ConfigPatch, RunConfig, Subcommand};
pub use error::{CliError, CliResult};
pub use run::{run, RunReport};
