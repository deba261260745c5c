//! Command-line companion to `vlmc-core`: configuration files, the
//! verification experiments, report emission and the experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::{parse_config, Config, ExperimentConfig, Kind, Model};
pub use error::CliError;
pub use report::{Check, Verdict, VerificationReport};
pub use runner::{run, RunManifest, RunOutcome};
