use clap::Parser;
use pat_cli::{run, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
