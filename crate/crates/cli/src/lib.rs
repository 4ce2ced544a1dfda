//! Command-line driver for the weighted denoising score matching experiments.

pub mod args;
pub mod commands;
pub mod density_arg;
pub mod error;
pub mod figures;
pub mod manifest;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use args::{Cli, Command};
pub use commands::Context;
pub use error::{CliError, CliResult};

/// Runs a parsed command line and returns the files written.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let ctx = Context {
        seed: cli.seed,
        jobs: cli.jobs,
        out_dir: cli.out_dir.clone(),
    };
    match &cli.command {
        Command::Weights(a) => commands::weights::run(a, &ctx),
        Command::Train(a) => commands::train::run(a, &ctx),
        Command::Sample(a) => commands::sample::run(a, &ctx),
        Command::Estimators(a) => commands::estimators::run(a, &ctx),
        Command::Gradvar(a) => commands::gradvar::run(a, &ctx),
        Command::Decompose(a) => commands::decompose::run(a, &ctx),
        Command::Figures(a) => {
            let m = match &a.manifest {
                Some(p) => manifest::Manifest::load(p)?,
                None => manifest::Manifest::parse(manifest::FULL, None)?,
            };
            figures::run_manifest(&m, &ctx)
        }
    }
}

/// Parses `argv` (program name first) and runs it.
pub fn run_from<I, T>(argv: I) -> CliResult<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Config(e.render().to_string()))?;
    run(&cli)
}
