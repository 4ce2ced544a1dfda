use std::path::PathBuf;

use wdsm::seed;
use wdsm::train::{gradient_variance, GradVarConfig, GradVarRow, TrainConfig};
use wdsm::weighting::WeightingScheme;

use super::{layout, schedule, weighting, Context};
use crate::args::GradvarArgs;
use crate::density_arg;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, output_path, write_csv, Provenance};

pub fn measure(a: &GradvarArgs, root_seed: u64) -> CliResult<Vec<GradVarRow<f64>>> {
    if a.seeds == 0 {
        return Err(CliError::Config("need at least one seed".into()));
    }
    let mut base = TrainConfig::new(density_arg::load(&a.density)?, WeightingScheme::Heuristic, layout(a.params, &a.hidden)?);
    base.schedule = schedule(&a.schedule)?;
    base.iterations = a.iters;
    base.eval_every = a.eval_every;
    base.batch_size = a.batch_size;
    base.lr = a.lr;
    base.eval_samples = 0;
    let gv = GradVarConfig {
        levels: base.schedule.levels(a.levels)?,
        batches: a.batches,
        seeds: (0..a.seeds).map(|i| seed::derive_seed(root_seed, "gradvar-seed", i as u64)).collect(),
        schemes: a.weightings.iter().map(|w| weighting(w)).collect::<CliResult<_>>()?,
        at_init: a.at_init,
    };
    Ok(gradient_variance(&base, &gv)?)
}

pub fn run(a: &GradvarArgs, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let rows = measure(a, ctx.seed)?;
    let mut columns = vec![
        "iterations".to_string(),
        "sigma_t".into(),
        "weighting".into(),
        "trace_mean".into(),
        "trace_std_err".into(),
    ];
    columns.extend((0..a.seeds).map(|i| format!("trace_seed{i}")));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.iteration.to_string(),
                fmt_num(r.sigma),
                r.scheme.to_string(),
                fmt_num(r.mean),
                fmt_num(r.std_err),
            ];
            v.extend(r.traces.iter().map(|&t| fmt_num(t)));
            v
        })
        .collect();
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let path = output_path(&ctx.out_dir, &a.out)?;
    let prov = Provenance::new("gradvar", format!("{a:?}"), ctx.seed)
        .note("trace of the unbiased sample covariance of per-batch gradients at a fixed sigma");
    write_csv(&path, &prov, &cols, &body)?;
    Ok(vec![path])
}
