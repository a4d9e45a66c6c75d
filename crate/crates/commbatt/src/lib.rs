//! Configuration, data files, reports and subcommands of the `commbatt`
//! command line. The numerics live in `commbatt-core`.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod ledger_io;
pub mod report;
pub mod scenario;

pub use error::{CliError, CliResult};
