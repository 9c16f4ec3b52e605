//! Instance files, reports and subcommands for the `distopt` binary.

pub mod commands;
pub mod curves;
pub mod error;
pub mod schema;
