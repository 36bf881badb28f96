//! Configuration, orchestration and file output for the `chc` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, ConfigIssue, RunConfig};
pub use run::{run_command, CliError, Command, RunSummary, Setup};
