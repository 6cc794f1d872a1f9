//! Command-line front end for the `treeloc-core` threshold computations.

pub mod commands;
pub mod config;
pub mod output;
pub mod reference;

use std::ffi::OsString;

pub use commands::{run, Outcome};
pub use config::{parse_config, ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] treeloc_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_USAGE,
            _ => EXIT_ERROR,
        }
    }
}

/// Parses `argv`, runs the command and maps the result to an exit code.
/// Help and version requests print to stdout and exit 0.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if let Err(e) = <config::Cli as clap::Parser>::try_parse_from(&argv) {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            print!("{e}");
            return EXIT_OK;
        }
    }
    let cfg = match parse_config(&argv) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return EXIT_USAGE;
        }
    };
    match run(&cfg) {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::ToleranceFailed) => {
            eprintln!("finished with failed tolerance checks; see {}", cfg.out.display());
            EXIT_TOLERANCE
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
