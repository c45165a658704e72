use std::process::ExitCode;

use clap::Parser;
use meevc::cli::{execute, Cli};

fn main() -> ExitCode {
    match execute(Cli::parse(), &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
