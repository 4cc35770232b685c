mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Spectrum(a) => commands::spectrum(&a),
        Command::Propagate(a) => commands::propagate(&a),
        Command::Beat(a) => commands::beat(&a),
        Command::SweepN(a) => commands::sweep_n(&a),
        Command::Detune(a) => commands::detune(&a),
        Command::Verify(a) => commands::verify(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
