//! The `ftl` command-line tool as a library, so tests can drive each
//! subcommand without spawning processes.

pub mod commands;
pub mod config;
pub mod data;
mod error;
pub mod pgm;
pub mod sweep;
pub mod training;

pub use error::{CliError, CliResult};
