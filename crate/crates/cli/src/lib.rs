//! Library side of the `ddga` command: argument expansion, presets and the
//! subcommand implementations, kept here so they can be tested in-process.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;

use std::ffi::OsString;

use clap::Parser;

pub use error::CliError;

/// Parses and runs one command line, returning the process exit code.
pub fn main_with(argv: Vec<OsString>) -> i32 {
    let args = match config::expand_args(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match commands::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
