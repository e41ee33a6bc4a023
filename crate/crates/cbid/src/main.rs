use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cbid::Cli::parse();
    match cbid::run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cbid: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
