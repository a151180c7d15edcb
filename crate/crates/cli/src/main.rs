use std::process::ExitCode;

use clap::Parser;
use harvest_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("harvest: {e}");
            ExitCode::from(e.class as u8)
        }
    }
}
