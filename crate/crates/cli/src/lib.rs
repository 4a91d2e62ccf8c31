//! Scenario harness around `paraxial-core`: config parsing, the `verify`,
//! `trace`, `bpm`, `compare` and `batch` subcommands, and their output formats.

pub mod batch;
pub mod bpm;
pub mod compare;
pub mod config;
pub mod error;
pub mod output;
pub mod trace;
pub mod verify;

pub use error::{CliError, Result};
