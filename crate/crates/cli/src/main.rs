mod args;
mod commands;
mod config;
mod error;
mod plots;

use args::{Cli, Command};
use clap::Parser;

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Summarize(a) => commands::summarize(a),
    };
    if let Err(e) = result {
        eprintln!("bnpirt: {e}");
        std::process::exit(e.exit_code());
    }
}
