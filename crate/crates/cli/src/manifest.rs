//! Experiment manifests: a TOML file with one table per named run.
//!
//! ```toml
//! [fig1_heuristic]
//! command = "train"
//! weighting = "heuristic"
//! out = "fig1/heuristic.csv"
//! ```
//!
//! Every key other than `command` becomes a `--key value` flag (`true`
//! becomes a bare flag, arrays are comma-joined). Runs get their seed from
//! `derive_seed(root, name, index)` with `index` the table's position in
//! the file; `seed`, `jobs` and `out-dir` are therefore not allowed in
//! entries.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use toml::Value;

use crate::args::{Cli, Command};
use crate::commands::{train, weights};
use crate::density_arg;
use crate::error::{CliError, CliResult};

pub const FULL: &str = include_str!("../configs/figures.toml");
pub const QUICK: &str = include_str!("../configs/figures_quick.toml");

const RESERVED: &[&str] = &["seed", "jobs", "out-dir"];

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub command: String,
    /// `(flag, value)`; `None` for a bare switch.
    pub flags: Vec<(String, Option<String>)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<Entry>,
}

fn scalar(v: &Value, ctx: &str) -> CliResult<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Integer(i) => Ok(i.to_string()),
        Value::Float(f) => Ok(f.to_string()),
        other => Err(CliError::Config(format!("{ctx}: unsupported value {other}"))),
    }
}

impl Manifest {
    /// Parses manifest text. Relative density paths are resolved against
    /// `base_dir` when the file exists there.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> CliResult<Self> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        let mut entries = Vec::new();
        for (name, body) in table {
            let body = body
                .as_table()
                .ok_or_else(|| CliError::Config(format!("manifest entry `{name}` must be a table")))?;
            let command = body
                .get("command")
                .and_then(Value::as_str)
                .ok_or_else(|| CliError::Config(format!("manifest entry `{name}` needs `command = \"...\"`")))?
                .to_string();
            if command == "figures" {
                return Err(CliError::Config(format!("manifest entry `{name}` cannot run `figures`")));
            }
            let mut flags = Vec::new();
            for (key, value) in body {
                if key == "command" {
                    continue;
                }
                if RESERVED.contains(&key.as_str()) {
                    return Err(CliError::Config(format!("manifest entry `{name}` may not set `{key}`")));
                }
                let ctx = format!("manifest entry `{name}` key `{key}`");
                let v = match value {
                    Value::Boolean(true) => None,
                    Value::Boolean(false) => continue,
                    Value::Array(items) => Some(items.iter().map(|i| scalar(i, &ctx)).collect::<CliResult<Vec<_>>>()?.join(",")),
                    other => Some(scalar(other, &ctx)?),
                };
                let v = match (key.as_str(), v, base_dir) {
                    ("density", Some(d), Some(base)) if !density_arg::exists(&d) && base.join(&d).is_file() => {
                        Some(base.join(&d).to_string_lossy().into_owned())
                    }
                    (_, v, _) => v,
                };
                flags.push((key.clone(), v));
            }
            entries.push(Entry { name, command, flags });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Command line for one entry.
    pub fn argv(entry: &Entry, seed: u64, out_dir: &Path) -> Vec<String> {
        let mut v = vec![
            "wdsm".to_string(),
            "--seed".into(),
            seed.to_string(),
            "--out-dir".into(),
            out_dir.to_string_lossy().into_owned(),
            entry.command.clone(),
        ];
        for (k, val) in &entry.flags {
            v.push(format!("--{k}"));
            v.extend(val.clone());
        }
        v
    }

    /// Parses every entry's flags and checks that densities exist and no
    /// two entries write the same file.
    pub fn validate(&self, out_dir: &Path) -> CliResult<Vec<Cli>> {
        let mut seen = HashSet::new();
        let mut parsed = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let cli = Cli::try_parse_from(Self::argv(e, 0, out_dir))
                .map_err(|err| CliError::Config(format!("manifest entry `{}`: {}", e.name, err.render())))?;
            if let Some(d) = density_of(&cli.command) {
                if !density_arg::exists(d) {
                    return Err(CliError::Config(format!("manifest entry `{}`: density `{d}` not found", e.name)));
                }
            }
            for out in outputs(&cli.command) {
                if !seen.insert(out.clone()) {
                    return Err(CliError::Config(format!(
                        "manifest entry `{}`: output `{}` is written by another entry",
                        e.name,
                        out.display()
                    )));
                }
            }
            parsed.push(cli);
        }
        Ok(parsed)
    }
}

fn density_of(c: &Command) -> Option<&str> {
    match c {
        Command::Weights(a) => Some(&a.density),
        Command::Train(a) => Some(&a.density),
        Command::Sample(a) if a.score == "analytic" => Some(&a.density),
        Command::Sample(_) => None,
        Command::Estimators(a) => Some(&a.density),
        Command::Gradvar(a) => Some(&a.density),
        Command::Decompose(a) => Some(&a.density),
        Command::Figures(_) => None,
    }
}

/// Files a command will write, relative to the output directory.
pub fn outputs(c: &Command) -> Vec<PathBuf> {
    match c {
        Command::Weights(a) => weights::output_names(a),
        Command::Train(a) => train::output_names(a),
        Command::Sample(a) => vec![a.out.clone()],
        Command::Estimators(a) => vec![a.out.clone()],
        Command::Gradvar(a) => vec![a.out.clone()],
        Command::Decompose(a) => vec![a.out.clone()],
        Command::Figures(_) => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags_in_file_order() {
        let m = Manifest::parse(
            "[b]\ncommand = \"weights\"\nlevels = 3\n\n[a]\ncommand = \"gradvar\"\nat-init = true\nweightings = [\"heuristic\", \"optimal\"]\nout = \"g.csv\"\n",
            None,
        )
        .unwrap();
        assert_eq!(m.entries[0].name, "b");
        assert_eq!(m.entries[1].flags[0], ("at-init".to_string(), None));
        assert_eq!(m.entries[1].flags[1].1.as_deref(), Some("heuristic,optimal"));
        assert_eq!(m.validate(Path::new(".")).unwrap().len(), 2);
    }

    #[test]
    fn rejects_bad_manifests() {
        let dup = "[a]\ncommand = \"sample\"\nout = \"x.csv\"\n[b]\ncommand = \"decompose\"\nout = \"x.csv\"\n";
        assert!(Manifest::parse(dup, None).unwrap().validate(Path::new(".")).is_err());
        let density = "[a]\ncommand = \"sample\"\ndensity = \"missing.cfg\"\nout = \"x.csv\"\n";
        assert!(Manifest::parse(density, None).unwrap().validate(Path::new(".")).is_err());
        assert!(Manifest::parse("[a]\ncommand = \"sample\"\nseed = 3\nout = \"x\"\n", None).is_err());
        assert!(Manifest::parse("[a]\nout = \"x\"\n", None).is_err());
        assert!(Manifest::parse("[a]\ncommand = \"figures\"\n", None).is_err());
        let flag = "[a]\ncommand = \"sample\"\nbogus = 1\nout = \"x.csv\"\n";
        assert!(Manifest::parse(flag, None).unwrap().validate(Path::new(".")).is_err());
    }

    #[test]
    fn bundled_manifests_are_valid() {
        for text in [FULL, QUICK] {
            let m = Manifest::parse(text, None).unwrap();
            m.validate(Path::new(".")).unwrap();
        }
    }

    #[test]
    fn empty_manifest_has_no_entries() {
        assert!(Manifest::parse("", None).unwrap().entries.is_empty());
    }
}
