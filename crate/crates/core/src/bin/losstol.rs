use std::io;
use std::process::ExitCode;

use clap::Parser;
use losstol::cli::{execute, exit_code, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command, &mut io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("losstol: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
