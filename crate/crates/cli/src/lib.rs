//! Command-line front end for `mvsc-core`: configuration, subcommands and
//! CSV output.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

pub use commands::{execute, Command, Outcome};
pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use verify::Suite;

/// Environment variable holding the worker count (defaults to all cores).
pub const WORKERS_ENV: &str = "MVSC_WORKERS";
