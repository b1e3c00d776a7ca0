//! Command-line front end: file formats, run manifests and subcommands.

pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::Cli;
pub use error::{CliError, Result};
pub use manifest::RunManifest;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 on usage errors, 2 on everything else.
///
/// Errors go to stderr as `error: <CODE>: <message>`.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let text = e.to_string();
            eprintln!("error: E_USAGE: {}", commands::first_line(&text));
            for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
                eprintln!("{line}");
            }
            return 1;
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::execute(cli, manifest::strip_out(&recorded)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.code());
            e.exit_code()
        }
    }
}
