//! Experiment harness for compact bilinear pooling.
//!
//! The `cbp` binary is a thin wrapper over [`run`]; every subcommand is also
//! callable as a library function so tests can drive it without a process.

pub mod args;
pub mod bench;
pub mod commands;
pub mod gradcheck;
pub mod model_file;
pub mod pooling;
pub mod report;
pub mod sweep;
pub mod synth;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use args::{Cli, Command};
pub use pooling::Method;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INVALID: i32 = 1;
    pub const IO: i32 = 2;
    pub const THRESHOLD: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] cbp_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Threshold(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => exit::INVALID,
            CliError::Core(cbp_core::Error::Io { .. }) | CliError::Io { .. } => exit::IO,
            CliError::Core(_) => exit::INVALID,
            CliError::Threshold(_) => exit::THRESHOLD,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() {
                exit::INVALID
            } else {
                exit::SUCCESS
            };
            let _ = err.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(()) => exit::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
