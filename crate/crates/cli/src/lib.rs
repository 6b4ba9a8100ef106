//! Command-line front end: argument parsing, configuration files and output.

pub mod commands;
pub mod config;
pub mod parse;

use std::ffi::OsString;
use std::path::Path;

use clap::Parser;

pub use commands::{Check, Command, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sbm_core::Error),
    #[error("cannot write output: {0}")]
    Output(String),
}

#[derive(Parser, Debug)]
#[command(name = "sbm", version, about = "Moments of one-dimensional super-Brownian motion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Parses `args` (program name first), expanding `--config`.
pub fn parse_args<I, T>(args: I) -> Result<Cli, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args = config::expand(args.into_iter().map(Into::into).collect())?;
    Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))
}

/// Runs a subcommand given without the program name, e.g. `["slopes", "--hypothesis", "h2"]`.
pub fn run_args(args: &[&str]) -> Result<Outcome, CliError> {
    parse_args(std::iter::once("sbm").chain(args.iter().copied()))?
        .command
        .run()
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// Writes the outcome. A `.csv` path receives the table and the JSON goes to
/// stdout; any other path receives the JSON with the table (if any) next to it.
pub fn emit(outcome: &Outcome, out: Option<&Path>) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(&outcome.document()).map_err(|e| CliError::Output(e.to_string()))? + "\n";
    match out {
        None => print!("{json}"),
        Some(p) if p.extension().is_some_and(|e| e == "csv") => {
            write(p, outcome.csv.as_deref().unwrap_or(""))?;
            print!("{json}");
        }
        Some(p) => {
            write(p, &json)?;
            if let Some(csv) = &outcome.csv {
                if outcome.command != "simulate" {
                    write(&p.with_extension("csv"), csv)?;
                }
            }
        }
    }
    Ok(())
}
