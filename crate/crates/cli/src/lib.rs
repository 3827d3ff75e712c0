//! Batch front end: argument parsing, configuration checks and the
//! subcommand drivers. `main` only forwards to [`run`].

mod args;
mod batch;
mod commands;
mod io;

use std::path::PathBuf;

use clap::Parser;
use thiserror::Error;

pub use args::{Cli, Command};
pub use batch::{run_classify, Backend, EffectiveConfig, Mode, RunConfig, ScanRecord, Summary};

/// Exit status for a configuration problem (also used by clap for usage errors).
pub const EXIT_BAD_CONFIG: i32 = 2;
/// Exit status when no input volumes were found.
pub const EXIT_NO_INPUTS: i32 = 3;
/// Exit status for unreadable inputs or unwritable outputs.
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("no input volumes found")]
    NoInputs,
    #[error("I/O error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadConfig(_) => EXIT_BAD_CONFIG,
            CliError::NoInputs => EXIT_NO_INPUTS,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, e: impl ToString) -> Self {
        CliError::Io {
            path: path.into(),
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Classify(a) => run_classify(&RunConfig::from_args(a)?).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::RenderViews(a) => commands::render_views(a),
        Command::BuildPrompt(a) => commands::build_prompt(a),
        Command::Taxonomy(a) => commands::taxonomy(a),
        Command::Phantom(a) => commands::phantom(a),
    }
}
