//! Command-line driver: config ingestion, training commands, evaluation and charts.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

pub use commands::{run, Cli};
pub use error::CliError;
