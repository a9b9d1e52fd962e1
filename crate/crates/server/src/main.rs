use std::process::ExitCode;

use clap::Parser;
use sketch_server::cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sketch: {e}");
            ExitCode::FAILURE
        }
    }
}
