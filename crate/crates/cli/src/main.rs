use std::process::ExitCode;

use clap::Parser;
use painter_cli::commands::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("painter: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
