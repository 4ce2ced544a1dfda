use std::process::ExitCode;

use clap::Parser;
use wdsm_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Partial { failures, .. } = &e {
                for (name, msg) in failures {
                    eprintln!("{name}: {msg}");
                }
            }
            eprintln!("wdsm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
