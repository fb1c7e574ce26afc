//! Command-line front end for `graphred-core`: dataset bundles, config
//! files and the `graphred` subcommands.

pub mod bundle;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod prepare;

pub use cli::{run, Cli};
pub use error::{CliError, Result};
