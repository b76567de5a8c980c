//! Library half of the `rac` binary: configuration loading and the
//! command implementations, exposed so integration tests can drive the
//! exact code paths the binary runs.
//!
//! A run is described by one TOML file (see [`config::RunConfig`]) and
//! executed by one of the [`commands`]: `index` embeds and stores the
//! category index, `label` walks the dataset and writes predictions plus
//! a cost ledger, `eval` scores predictions against gold labels,
//! `schemagen` writes a generated label schema, and `benchmark` measures
//! binary membership accuracy on balanced pairs.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_benchmark, cmd_eval, cmd_index, cmd_label, cmd_schemagen, CliError, EXIT_CONFIG,
    EXIT_PARTIAL, EXIT_TOTAL,
};
pub use config::{CommandKind, ConfigError, RunConfig};
