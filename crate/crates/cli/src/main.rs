mod args;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use settings::RunConfig;

fn init_logging(cli: &Cli, config: &RunConfig) {
    let level = if cli.quiet {
        "error"
    } else {
        match cli.verbose {
            0 => config.verbosity.as_deref().unwrap_or("warn"),
            1 => "info",
            2 => "debug",
            _ => "trace",
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let config = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("magpos: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => RunConfig::default(),
    };
    init_logging(&cli, &config);

    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &config),
        Command::Calibrate(a) => commands::calibrate(a, &config),
        Command::Run(a) => commands::run(a, &config),
        Command::Pca(a) => commands::pca(a, &config),
        Command::Eval(a) => commands::eval(a, &config),
        Command::Replay(a) => commands::replay(a, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("magpos: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
