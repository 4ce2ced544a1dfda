use std::path::PathBuf;

use rayon::prelude::*;
use wdsm::seed;

use crate::commands::Context;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

/// Runs every manifest entry, up to `ctx.jobs` at a time. Failed entries do
/// not stop the others; their outputs are whatever they wrote before failing.
pub fn run_manifest(m: &Manifest, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    m.validate(&ctx.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<(String, CliResult<Vec<PathBuf>>)> = pool.install(|| {
        m.entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let s = seed::derive_seed(ctx.seed, &e.name, i as u64);
                (e.name.clone(), crate::run_from(Manifest::argv(e, s, &ctx.out_dir)))
            })
            .collect()
    });
    let mut written = Vec::new();
    let mut failures = Vec::new();
    for (name, r) in results {
        match r {
            Ok(files) => written.extend(files),
            Err(e) => failures.push((name, e.to_string())),
        }
    }
    if failures.is_empty() {
        Ok(written)
    } else {
        Err(CliError::Partial {
            total: m.entries.len(),
            failures,
        })
    }
}
