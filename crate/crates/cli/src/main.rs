use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = ssdrank_cli::commands::Cli::parse();
    match ssdrank_cli::commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
