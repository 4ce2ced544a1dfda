use std::path::{Path, PathBuf};

use rayon::prelude::*;
use wdsm::seed;
use wdsm::stats::{mean_se, moving_average};
use wdsm::train::{train, RunLog, TrainConfig, TrainOutcome};

use super::{layout, schedule, weighting, Context};
use crate::args::TrainArgs;
use crate::density_arg;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, fmt_opt, output_path, write_csv, Provenance};

pub const COLUMNS: [&str; 11] = [
    "iterations",
    "loss",
    "model_sample_ed",
    "model_sample_ed_smoothed",
    "model_sample_ed_lb",
    "model_sample_ed_ub",
    "model_sample_ed_std_err",
    "gen_sample_ed",
    "gen_sample_ed_smoothed",
    "gen_sample_ed_lb",
    "gen_sample_ed_ub",
];

pub const BASELINE_COLUMNS: [&str; 5] = [
    "iterations",
    "gen_sample_ed",
    "gen_sample_ed_smoothed",
    "gen_sample_ed_lb",
    "gen_sample_ed_ub",
];

pub const ED_NOTE: &str = "energy distance: V-statistic 2E|X-Y| - E|X-X'| - E|Y-Y'| (not square-rooted)";

pub fn config(a: &TrainArgs) -> CliResult<TrainConfig<f64>> {
    let mut cfg = TrainConfig::new(density_arg::load(&a.density)?, weighting(&a.weighting)?, layout(a.params, &a.hidden)?);
    cfg.schedule = schedule(&a.schedule)?;
    cfg.iterations = a.iters;
    cfg.batch_size = a.batch_size;
    cfg.lr = a.lr;
    cfg.eval_every = a.eval_every;
    cfg.eval_from = a.eval_from;
    cfg.eval_samples = a.eval_samples;
    cfg.sampler_steps = a.sampler_steps;
    cfg.baseline = !a.no_baseline;
    cfg.validate()?;
    Ok(cfg)
}

/// Seed of the `i`-th replicate run under a root seed.
pub fn replicate_seed(root: u64, i: usize) -> u64 {
    seed::derive_seed(root, "train", i as u64)
}

/// Trains one replicate per seed, in parallel.
pub fn run_replicates(cfg: &TrainConfig<f64>, root: u64, n: usize) -> CliResult<Vec<TrainOutcome<f64>>> {
    if n == 0 {
        return Err(CliError::Config("need at least one seed".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = replicate_seed(root, i);
            train(&c).map_err(CliError::from)
        })
        .collect()
}

/// Mean and standard error across seeds of one evaluated quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub loss: f64,
    pub model: Option<Band>,
    pub model_smoothed: Option<f64>,
    pub gen: Option<Band>,
    pub gen_smoothed: Option<f64>,
}

fn band(values: Vec<Option<f64>>) -> Option<Band> {
    let vals: Option<Vec<f64>> = values.into_iter().collect();
    vals.map(|v| {
        let (mean, std_err) = mean_se(&v);
        Band { mean, std_err }
    })
}

fn smooth_into(rows: &mut [AggregateRow], window: usize, get: fn(&AggregateRow) -> Option<Band>, set: fn(&mut AggregateRow, f64)) {
    let idx: Vec<usize> = (0..rows.len()).filter(|&i| get(&rows[i]).is_some()).collect();
    let vals: Vec<f64> = idx.iter().map(|&i| get(&rows[i]).map(|b| b.mean).unwrap_or_default()).collect();
    for (&i, s) in idx.iter().zip(moving_average(&vals, window)) {
        set(&mut rows[i], s);
    }
}

/// Per-iteration means across runs, with centered moving averages over the
/// evaluated records.
pub fn aggregate(logs: &[RunLog<f64>], window: usize) -> CliResult<Vec<AggregateRow>> {
    let first = logs.first().ok_or_else(|| CliError::Config("no runs to aggregate".into()))?;
    if logs.iter().any(|l| l.iterations() != first.iterations()) {
        return Err(CliError::Config("runs have different evaluation points".into()));
    }
    let mut rows: Vec<AggregateRow> = (0..first.records.len())
        .map(|r| {
            let losses: Vec<f64> = logs.iter().map(|l| l.records[r].loss).collect();
            AggregateRow {
                iteration: first.records[r].iteration,
                loss: mean_se(&losses).0,
                model: band(logs.iter().map(|l| l.records[r].model_sample_ed).collect()),
                model_smoothed: None,
                gen: band(logs.iter().map(|l| l.records[r].gen_sample_ed).collect()),
                gen_smoothed: None,
            }
        })
        .collect();
    smooth_into(&mut rows, window, |r| r.model, |r, v| r.model_smoothed = Some(v));
    smooth_into(&mut rows, window, |r| r.gen, |r, v| r.gen_smoothed = Some(v));
    Ok(rows)
}

/// Mean and standard error across runs of each run's final smoothed model
/// energy distance.
pub fn final_smoothed_model_ed(logs: &[RunLog<f64>], window: usize) -> Option<Band> {
    band(logs.iter().map(|l| l.final_smoothed_model_ed(window)).collect())
}

pub fn final_smoothed_gen_ed(logs: &[RunLog<f64>], window: usize) -> Option<Band> {
    band(logs.iter().map(|l| l.final_smoothed_gen_ed(window)).collect())
}

fn lb(b: Option<Band>) -> String {
    fmt_opt(b.map(|b| b.mean - b.std_err))
}

fn ub(b: Option<Band>) -> String {
    fmt_opt(b.map(|b| b.mean + b.std_err))
}

fn model_path(base: &Path, i: usize, n: usize) -> PathBuf {
    if n == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_seed{i}.{ext}"),
        None => format!("{stem}_seed{i}"),
    };
    base.with_file_name(name)
}

pub fn output_names(a: &TrainArgs) -> Vec<PathBuf> {
    let mut v = vec![a.out.clone()];
    v.extend(a.baseline_out.clone());
    if let Some(m) = &a.save_model {
        v.extend((0..a.seeds).map(|i| model_path(m, i, a.seeds)));
    }
    v
}

pub fn run(a: &TrainArgs, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let cfg = config(a)?;
    if a.baseline_out.is_some() && a.no_baseline {
        return Err(CliError::Config("--baseline-out needs the reference sampler".into()));
    }
    let outcomes = run_replicates(&cfg, ctx.seed, a.seeds)?;
    let logs: Vec<RunLog<f64>> = outcomes.iter().map(|o| o.log.clone()).collect();
    let rows = aggregate(&logs, a.smooth_window)?;
    let prov = Provenance::new("train", format!("{a:?}"), ctx.seed)
        .note(ED_NOTE)
        .note(format!("seeds={} optimizer=adam lr={} batch_size={}", a.seeds, a.lr, a.batch_size));

    let mut written = Vec::new();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_num(r.loss),
                fmt_opt(r.model.map(|b| b.mean)),
                fmt_opt(r.model_smoothed),
                lb(r.model),
                ub(r.model),
                fmt_opt(r.model.map(|b| b.std_err)),
                fmt_opt(r.gen.map(|b| b.mean)),
                fmt_opt(r.gen_smoothed),
                lb(r.gen),
                ub(r.gen),
            ]
        })
        .collect();
    let path = output_path(&ctx.out_dir, &a.out)?;
    write_csv(&path, &prov, &COLUMNS, &body)?;
    written.push(path);

    if let Some(rel) = &a.baseline_out {
        let body: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| r.gen.is_some())
            .map(|r| {
                vec![
                    r.iteration.to_string(),
                    fmt_opt(r.gen.map(|b| b.mean)),
                    fmt_opt(r.gen_smoothed),
                    lb(r.gen),
                    ub(r.gen),
                ]
            })
            .collect();
        let path = output_path(&ctx.out_dir, rel)?;
        write_csv(&path, &prov, &BASELINE_COLUMNS, &body)?;
        written.push(path);
    }

    if let Some(m) = &a.save_model {
        for (i, o) in outcomes.iter().enumerate() {
            let path = output_path(&ctx.out_dir, &model_path(m, i, outcomes.len()))?;
            o.params.save(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wdsm::train::EvalRecord;

    fn log(eds: &[Option<f64>]) -> RunLog<f64> {
        RunLog {
            records: eds
                .iter()
                .enumerate()
                .map(|(i, &e)| EvalRecord {
                    iteration: i * 10,
                    loss: 1.0,
                    model_sample_ed: e,
                    gen_sample_ed: None,
                })
                .collect(),
        }
    }

    #[test]
    fn aggregates_across_seeds() {
        let logs = [log(&[None, Some(1.0), Some(3.0)]), log(&[None, Some(3.0), Some(5.0)])];
        let rows = aggregate(&logs, 5).unwrap();
        assert_eq!(rows[0].model, None);
        assert_eq!(rows[1].model.unwrap().mean, 2.0);
        assert_eq!(rows[1].model.unwrap().std_err, 1.0);
        assert_eq!(rows[2].model_smoothed, Some(3.0));
        let f = final_smoothed_model_ed(&logs, 5).unwrap();
        assert_eq!(f.mean, 3.0);
    }

    #[test]
    fn mismatched_runs_rejected() {
        assert!(aggregate(&[log(&[None]), log(&[None, None])], 5).is_err());
        assert!(aggregate(&[], 5).is_err());
    }

    #[test]
    fn model_paths_per_seed() {
        assert_eq!(model_path(Path::new("m/p.txt"), 0, 1), PathBuf::from("m/p.txt"));
        assert_eq!(model_path(Path::new("m/p.txt"), 2, 3), PathBuf::from("m/p_seed2.txt"));
    }
}
