//! File formats, config handling and experiment drivers on top of
//! `nlperim-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod selftest;

pub use config::{ExperimentConfig, Task};
pub use error::{CliError, CliResult};
