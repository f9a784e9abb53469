pub mod cli;
pub mod commands;
pub mod error;
pub mod input;
pub mod manifest;

use std::io::Write;

use cli::{Cli, Command, DiagnoseCommand};
pub use error::{CliError, Result};

/// Runs one parsed command, writing its primary output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Fit(args) => commands::fit(args, out),
        Command::Predict(args) => commands::predict(args, out),
        Command::Simulate(args) => commands::simulate(args, out),
        Command::Curves(args) => commands::curves(args, out),
        Command::Diagnose(DiagnoseCommand::Qq(args)) => commands::diagnose_qq(args, out),
    }
}
