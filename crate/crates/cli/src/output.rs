//! CSV writing with a provenance comment line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use wdsm::seed::fnv1a64;

use crate::error::CliResult;

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e12).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// 64-bit FNV-1a of the run configuration, as 16 hex digits.
pub fn config_hash(config: &str) -> String {
    format!("{:016x}", fnv1a64(config.as_bytes()))
}

/// Comment lines and column names that start every CSV.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: &'static str,
    pub config: String,
    pub seed: u64,
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn new(command: &'static str, config: String, seed: u64) -> Self {
        Self {
            command,
            config,
            seed,
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    fn header(&self) -> String {
        let mut s = format!(
            "# wdsm {} config_hash={} seed={}\n",
            self.command,
            config_hash(&self.config),
            self.seed
        );
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        s
    }
}

/// Resolves `rel` under `out_dir`, creating parent directories.
pub fn output_path(out_dir: &Path, rel: &Path) -> CliResult<PathBuf> {
    let path = out_dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(path)
}

pub fn write_csv(path: &Path, prov: &Provenance, columns: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut s = prov.header();
    s.push_str(&columns.join(","));
    s.push('\n');
    for r in rows {
        debug_assert_eq!(r.len(), columns.len());
        s.push_str(&r.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}
