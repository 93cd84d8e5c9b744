use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use phasefit_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match phasefit_cli::run(cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
