mod args;
mod commands;
mod config;
mod error;
mod report;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::config::CliConfig;

fn run(cli: Cli) -> error::Result<()> {
    let cfg = CliConfig::resolve(&cli.shared)?;
    match &cli.command {
        Command::Prepare(a) => commands::prepare(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Evaluate(a) => commands::evaluate_cmd(cfg, a),
        Command::Predict(a) => commands::predict_cmd(a),
        Command::Report(a) => commands::report_cmd(cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
