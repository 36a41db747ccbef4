//! Experiment harness for the `strad` library: synthetic benchmarks,
//! training, scoring, evaluation, loss comparisons, ablations and gradient
//! checks, driven by a TOML config (see [`config`]).

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use error::{CliError, Result};
