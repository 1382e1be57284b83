use std::process::ExitCode;

use clap::Parser;
use heatsing_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli, std::env::vars()) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {f}");
            }
            if outcome.pass {
                println!("PASS");
                ExitCode::SUCCESS
            } else {
                println!("FAIL");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
