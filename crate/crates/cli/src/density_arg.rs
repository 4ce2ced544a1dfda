//! `--density` accepts a builtin name or a path to a mixture file.

use std::fs;
use std::path::Path;

use wdsm::density::parse_mixture;
use wdsm::Mixture;

use crate::error::{CliError, CliResult};

pub const BUILTINS: &[(&str, &str)] = &[
    ("fig1", include_str!("../configs/fig1_gmm.cfg")),
    ("gradvar", include_str!("../configs/gradvar_gmm.cfg")),
    ("standard-normal", include_str!("../configs/standard_normal.cfg")),
];

fn builtin(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn exists(spec: &str) -> bool {
    builtin(spec).is_some() || Path::new(spec).is_file()
}

pub fn load(spec: &str) -> CliResult<Mixture> {
    let text = match builtin(spec) {
        Some(t) => t.to_string(),
        None => fs::read_to_string(spec).map_err(|e| {
            CliError::Config(format!(
                "density `{spec}` is neither a builtin ({}) nor a readable file: {e}",
                BUILTINS.iter().map(|b| b.0).collect::<Vec<_>>().join(", ")
            ))
        })?,
    };
    parse_mixture(&text).map_err(|e| CliError::Config(format!("density `{spec}`: {e}")))
}
