//! Command-line front end for the raftsplit model and simulator.

pub mod commands;
pub mod error;
pub mod report;
pub mod settings;

pub use error::CliError;
pub use settings::{Cli, RunConfig};

/// Resolves the configuration, runs the command and writes its output.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::from_cli(cli.command, cli.flags)?;
    let outcome = commands::execute(&cfg)?;
    outcome
        .report
        .emit(cfg.output_format, cfg.output_path.as_deref(), cfg.ecdf_path.as_deref())?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
