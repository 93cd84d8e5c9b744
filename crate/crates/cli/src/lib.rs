//! Command-line front end for the `phasefit` library.

pub mod args;
pub mod commands;
pub mod error;
pub mod formats;

pub use commands::{run, DEFAULT_CONFIG};
pub use error::{CliError, EXIT_INPUT, EXIT_NUMERICAL};
