use std::path::{Path, PathBuf};

use wdsm::net::MlpParams;
use wdsm::sampling::{reverse_sde_sample, SamplerConfig};
use wdsm::seed;

use super::{schedule, Context};
use crate::args::SampleArgs;
use crate::density_arg;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, output_path, write_csv, Provenance};

pub fn run(a: &SampleArgs, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let sched = schedule(&a.schedule)?;
    let cfg = SamplerConfig {
        steps: a.steps,
        n_samples: a.n,
        ..SamplerConfig::default()
    };
    let stream = seed::derive_seed(ctx.seed, "sample", 0);
    let xs = if a.score == "analytic" {
        let gmm = density_arg::load(&a.density)?;
        reverse_sde_sample(&gmm, &sched, &cfg, stream)?
    } else if let Some(path) = a.score.strip_prefix("model:") {
        let params = MlpParams::<f64>::load(Path::new(path), None)
            .map_err(|e| CliError::Config(format!("model `{path}`: {e}")))?;
        reverse_sde_sample(&params, &sched, &cfg, stream)?
    } else {
        return Err(CliError::Config(format!("--score must be `analytic` or `model:<path>`, got `{}`", a.score)));
    };
    let rows: Vec<Vec<String>> = xs.iter().map(|&x| vec![fmt_num(x)]).collect();
    let path = output_path(&ctx.out_dir, &a.out)?;
    write_csv(&path, &Provenance::new("sample", format!("{a:?}"), ctx.seed), &["x"], &rows)?;
    Ok(vec![path])
}
