//! Experiment runner for the `coldcav` simulator: configuration files,
//! CSV result tables, parallel sweeps and the subcommands of the `coldcav`
//! binary.

// `!(x > 0.0)` is how NaN is rejected along with the bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod sweep;
pub mod table;

pub use cli::run_cli;
pub use commands::{execute, run_command, write_artifacts, Artifact, CommandKind};
pub use config::{parse_config, parse_config_with, Override, RunConfig};
pub use sweep::{sweep, PhaseClass};
pub use table::{read_table, write_table, ResultTable, Value};
