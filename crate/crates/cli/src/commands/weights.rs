use std::path::{Path, PathBuf};

use wdsm::weighting::{heuristic_weight, optimal_pointwise_weight};

use super::{linspace, schedule, Context};
use crate::args::WeightsArgs;
use crate::density_arg;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, output_path, write_csv, Provenance};

pub const COLUMNS: [&str; 4] = ["x", "sigma_t", "conventional_weights", "optimal_weights"];

pub fn output_names(a: &WeightsArgs) -> Vec<PathBuf> {
    (0..a.levels).map(|i| PathBuf::from(format!("{}{i}.csv", a.prefix))).collect()
}

pub fn run(a: &WeightsArgs, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    if a.levels == 0 {
        return Err(CliError::Config("need at least one level".into()));
    }
    let gmm = density_arg::load(&a.density)?;
    let sched = schedule(&a.schedule)?;
    let levels = sched.levels(a.levels)?;
    let xs = linspace(a.x_min, a.x_max, a.x_points)?;
    let prov = Provenance::new("weights", format!("{a:?}"), ctx.seed);
    let mut written = Vec::new();
    for (rel, &sigma) in output_names(a).iter().zip(&levels) {
        let rows: Vec<Vec<String>> = xs
            .iter()
            .map(|&x| {
                let (_, h) = gmm.perturbed_score_hessian(sigma, x);
                vec![
                    fmt_num(x),
                    fmt_num(sigma),
                    fmt_num(heuristic_weight(sigma)),
                    fmt_num(optimal_pointwise_weight(sigma, h).value),
                ]
            })
            .collect();
        let path = output_path(&ctx.out_dir, Path::new(rel))?;
        write_csv(&path, &prov, &COLUMNS, &rows)?;
        written.push(path);
    }
    Ok(written)
}
