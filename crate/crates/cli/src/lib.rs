//! Command-line front end for `diffsteg`.
//!
//! Images are binary PNM files. Priors come from a TOML spec (see
//! [`prior_spec`]) and runs from a TOML config (see [`config`]).

pub mod commands;
pub mod config;
pub mod error;
pub mod pnm;
pub mod prior_spec;
pub mod sidecar;
pub mod toy_assets;

use std::ffi::OsString;

use clap::Parser;

pub use error::{CliError, Result};

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 on success, 1 for usage errors, 2 for bad data.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
