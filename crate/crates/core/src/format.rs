//! Line-oriented text container for regressors and posteriors.
//!
//! ```text
//! pacile-regressor 1
//! dims <dim_h> <dim_f>
//! meta <key> <value...>          (zero or more, keys without spaces)
//! variance <f64>                 (posteriors only)
//! parametrization <tag>          (posteriors only)
//! data
//! <dim_h lines of dim_f space-separated f64, row-major>
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian_posterior::{GaussianPosterior, Parametrization};
use crate::surrogate_regression::LinearRegressor;

pub const MAGIC: &str = "pacile-regressor";
pub const VERSION: u32 = 1;

fn bad(message: impl Into<String>) -> Error {
    Error::Format {
        what: "regressor container",
        message: message.into(),
    }
}

fn write_container(
    w: &LinearRegressor,
    meta: &BTreeMap<String, String>,
    posterior: Option<(f64, &Parametrization)>,
) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "dims {} {}", w.dim_h(), w.dim_f());
    for (k, v) in meta {
        if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(bad(format!("metadata key `{k}` or its value is not writable")));
        }
        let _ = writeln!(s, "meta {k} {v}");
    }
    if let Some((variance, p)) = posterior {
        let _ = writeln!(s, "variance {variance:?}");
        let _ = writeln!(s, "parametrization {}", p.tag());
    }
    s.push_str("data\n");
    for row in w.matrix().row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s.push_str("end\n");
    Ok(s)
}

/// Parsed container contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub regressor: LinearRegressor,
    pub meta: BTreeMap<String, String>,
    pub variance: Option<f64>,
    pub parametrization: Option<Parametrization>,
}

pub fn regressor_to_string(w: &LinearRegressor, meta: &BTreeMap<String, String>) -> Result<String> {
    write_container(w, meta, None)
}

pub fn posterior_to_string(q: &GaussianPosterior, meta: &BTreeMap<String, String>) -> Result<String> {
    write_container(&q.mean, meta, Some((q.variance, &q.parametrization)))
}

pub fn parse_container(text: &str) -> Result<Container> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty input"))?;
    match header.split_once(' ') {
        Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
        _ => return Err(bad(format!("unrecognized header `{header}`"))),
    }
    let dims = lines.next().ok_or_else(|| bad("missing dims line"))?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    let (h, f) = match parts.as_slice() {
        ["dims", h, f] => (
            h.parse::<usize>().map_err(|_| bad("bad dim_h"))?,
            f.parse::<usize>().map_err(|_| bad("bad dim_f"))?,
        ),
        _ => return Err(bad(format!("bad dims line `{dims}`"))),
    };
    let mut meta = BTreeMap::new();
    let mut variance = None;
    let mut parametrization = None;
    loop {
        let line = lines.next().ok_or_else(|| bad("missing data section"))?;
        if line == "data" {
            break;
        }
        let (key, rest) = line.split_once(' ').ok_or_else(|| bad(format!("bad line `{line}`")))?;
        match key {
            "meta" => {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
            }
            "variance" => variance = Some(rest.parse::<f64>().map_err(|_| bad("bad variance"))?),
            "parametrization" => parametrization = Some(rest.parse::<Parametrization>()?),
            _ => return Err(bad(format!("unknown field `{key}`"))),
        }
    }
    let mut values = Vec::with_capacity(h * f);
    for r in 0..h {
        let line = lines.next().ok_or_else(|| bad(format!("missing data row {r}")))?;
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value `{v}` in row {r}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != f {
            return Err(bad(format!("row {r} has {} values, expected {f}", row.len())));
        }
        values.extend(row);
    }
    if lines.next() != Some("end") {
        return Err(bad("missing end marker"));
    }
    let regressor = LinearRegressor::new(DMatrix::from_row_slice(h, f, &values))?;
    Ok(Container {
        regressor,
        meta,
        variance,
        parametrization,
    })
}

pub fn parse_posterior(text: &str) -> Result<(GaussianPosterior, BTreeMap<String, String>)> {
    let c = parse_container(text)?;
    let variance = c.variance.ok_or_else(|| bad("posterior is missing its variance"))?;
    let p = c.parametrization.ok_or_else(|| bad("posterior is missing its parametrization"))?;
    Ok((GaussianPosterior::new(c.regressor, variance, p)?, c.meta))
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("`{}` is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LinearRegressor {
        LinearRegressor::new(DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-300, 3.0, 1.0 / 3.0, 7e22, -0.0])).unwrap()
    }

    #[test]
    fn regressor_roundtrip_is_exact() {
        let mut meta = BTreeMap::new();
        meta.insert("kernel".to_string(), "linear".to_string());
        meta.insert("lambda".to_string(), "0.001".to_string());
        let text = regressor_to_string(&sample(), &meta).unwrap();
        let c = parse_container(&text).unwrap();
        assert_eq!(c.meta, meta);
        for (a, b) in c.regressor.matrix().iter().zip(sample().matrix().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(c.variance.is_none());
    }

    #[test]
    fn posterior_roundtrip() {
        let q = GaussianPosterior::new(sample(), 0.125, Parametrization::Custom(0.125)).unwrap();
        let text = posterior_to_string(&q, &BTreeMap::new()).unwrap();
        let (back, _) = parse_posterior(&text).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_container("").is_err());
        assert!(parse_container("pacile-regressor 2\ndims 1 1\ndata\n1\nend\n").is_err());
        assert!(parse_container("pacile-regressor 1\ndims 1 2\ndata\n1\nend\n").is_err());
        assert!(parse_container("pacile-regressor 1\ndims 1 1\ndata\n1\n").is_err());
        assert!(parse_posterior("pacile-regressor 1\ndims 1 1\ndata\n1\nend\n").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
