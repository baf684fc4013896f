//! Experiment driver for `o2o-core`: configuration files, on-disk formats
//! and the `o2o` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use config::{ExperimentConfig, Mode};
pub use error::{LabError, LabResult};
