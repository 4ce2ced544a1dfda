pub mod decompose;
pub mod estimators;
pub mod gradvar;
pub mod sample;
pub mod train;
pub mod weights;

use std::path::PathBuf;

use wdsm::net::MlpLayout;
use wdsm::weighting::WeightingScheme;
use wdsm::Schedule;

use crate::args::ScheduleArgs;
use crate::error::{CliError, CliResult};

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

pub(crate) fn schedule(a: &ScheduleArgs) -> CliResult<Schedule> {
    Ok(Schedule::new(a.sigma_min, a.sigma_max)?)
}

pub(crate) fn layout(params: usize, hidden: &Option<Vec<usize>>) -> CliResult<MlpLayout> {
    Ok(match hidden {
        Some(h) => MlpLayout::new(h.clone())?,
        None => MlpLayout::for_param_count(params)?,
    })
}

pub(crate) fn weighting(name: &str) -> CliResult<WeightingScheme> {
    name.parse().map_err(|e: wdsm::Error| CliError::Config(e.to_string()))
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> CliResult<Vec<f64>> {
    if n < 2 || lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(CliError::Config(format!("need at least 2 points on an increasing range, got {n} on [{lo}, {hi}]")));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}
