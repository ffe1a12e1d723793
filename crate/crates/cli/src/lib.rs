//! Configuration, output writing and plotting for the `squidsim` binary.

pub mod commands;
pub mod config;
pub mod svg;
pub mod verify;

pub use commands::{cmd_levels, cmd_scan, cmd_sweep, cmd_verify, CliError};
pub use config::{load_config, parse_config, ConfigError, RunConfig};
