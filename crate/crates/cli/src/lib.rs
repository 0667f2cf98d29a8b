//! Experiment orchestration for Hadamard products of sample covariance
//! matrices: config loading, run directories and the subcommands.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{execute, Command, Report, TensorCheckReport, TheorySummary};
pub use config::{ConcentrationConfig, Overrides, RunConfig, TensorCheckConfig};
pub use manifest::{verify_manifest, RunManifest, RunStatus};
