use super::{Component, GaussianMixture1D};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parses the key-value mixture format: one `component = <weight> <mean> <std>`
/// line per component. `#` starts a comment; blank lines are ignored.
pub fn parse_mixture<T: Scalar>(text: &str) -> Result<GaussianMixture1D<T>> {
    let mut components = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        match key.trim() {
            "component" => {
                let fields: Vec<&str> = value.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("component needs `<weight> <mean> <std>`, found {} fields", fields.len()),
                    });
                }
                let mut parsed = [T::zero(); 3];
                for (slot, f) in parsed.iter_mut().zip(&fields) {
                    *slot = f.parse::<T>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("`{f}` is not a number"),
                    })?;
                }
                components.push(Component::new(parsed[0], parsed[1], parsed[2]));
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unknown key `{other}`"),
                })
            }
        }
    }
    GaussianMixture1D::new(components)
}

pub fn format_mixture<T: Scalar>(gmm: &GaussianMixture1D<T>) -> String {
    gmm.components()
        .iter()
        .map(|c| format!("component = {} {} {}\n", c.weight, c.mean, c.std))
        .collect()
}
