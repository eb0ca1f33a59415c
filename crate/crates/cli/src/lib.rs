//! Command-line front end for `ionshelf`: config files, the pipeline
//! stages, run manifests and figures.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::{ConfigSource, RunConfig};
pub use error::{CliError, Result};
