use std::path::PathBuf;

use wdsm::estimators::{estimator_bias_variance, EstimatorKind};
use wdsm::seed;

use super::{linspace, Context};
use crate::args::EstimatorArgs;
use crate::density_arg;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, output_path, write_csv, Provenance};

pub const COLUMNS: [&str; 6] = ["x_t", "kind", "estimate", "bias", "variance", "std_err"];

pub fn kinds(name: &str) -> CliResult<Vec<EstimatorKind>> {
    if name == "all" {
        Ok(EstimatorKind::ALL.to_vec())
    } else {
        name.parse::<EstimatorKind>()
            .map(|k| vec![k])
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn run(a: &EstimatorArgs, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let gmm = density_arg::load(&a.density)?;
    let grid = if a.x_points == 1 {
        vec![a.x_min]
    } else {
        linspace(a.x_min, a.x_max, a.x_points)?
    };
    let mut rows = Vec::new();
    for (i, kind) in kinds(&a.kind)?.into_iter().enumerate() {
        let mut rng = seed::stream(ctx.seed, "estimators", i as u64);
        for r in estimator_bias_variance(kind, &gmm, a.sigma, &grid, a.delta, a.n, a.reps, &mut rng)? {
            rows.push(vec![
                fmt_num(r.x_t),
                r.kind.to_string(),
                fmt_num(r.estimate),
                fmt_num(r.bias),
                fmt_num(r.variance),
                fmt_num(r.std_err),
            ]);
        }
    }
    let path = output_path(&ctx.out_dir, &a.out)?;
    write_csv(&path, &Provenance::new("estimators", format!("{a:?}"), ctx.seed), &COLUMNS, &rows)?;
    Ok(vec![path])
}
