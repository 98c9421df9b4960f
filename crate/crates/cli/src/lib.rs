//! Command line pipeline around `pec-core`: dataset generation, model
//! training, evaluation, surrogate optimization and reporting. Every step
//! reads and writes artifacts in one output directory.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::Context;
pub use config::PipelineConfig;
pub use error::{CliError, Result};
