use std::process::ExitCode;

use clap::Parser;
use faildetect::cli::{execute, Cli};

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).expect("error report serializes"));
            ExitCode::FAILURE
        }
    }
}
