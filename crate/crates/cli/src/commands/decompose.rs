use std::path::PathBuf;

use wdsm::seed;
use wdsm::train::pythagorean_gap;

use super::Context;
use crate::args::DecomposeArgs;
use crate::density_arg;
use crate::error::CliResult;
use crate::output::{fmt_num, output_path, write_csv, Provenance};

pub const COLUMNS: [&str; 7] = ["sigma_t", "l_dsm", "l_sm", "gap", "analytic", "gap_std_err", "rel_error"];

pub fn run(a: &DecomposeArgs, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let gmm = density_arg::load(&a.density)?;
    let mut rows = Vec::new();
    for (i, &sigma) in a.sigmas.iter().enumerate() {
        let mut rng = seed::stream(ctx.seed, "decompose", i as u64);
        let g = pythagorean_gap(&gmm, sigma, |x| gmm.perturbed_score_hessian(sigma, x).0 + a.shift, a.n, &mut rng)?;
        rows.push(vec![
            fmt_num(sigma),
            fmt_num(g.l_dsm),
            fmt_num(g.l_sm),
            fmt_num(g.gap),
            fmt_num(g.analytic),
            fmt_num(g.gap_std_err),
            fmt_num(((g.gap - g.analytic) / g.analytic).abs()),
        ]);
    }
    let path = output_path(&ctx.out_dir, &a.out)?;
    write_csv(&path, &Provenance::new("decompose", format!("{a:?}"), ctx.seed), &COLUMNS, &rows)?;
    Ok(vec![path])
}
