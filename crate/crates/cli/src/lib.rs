//! Command-line front end: synth, features, train, eval, fuse, params.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Cli};
pub use config::RunConfig;
pub use error::CliError;
