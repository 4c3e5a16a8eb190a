//! CSV ingestion.
//!
//! Format: UTF-8, one header row, feature columns holding decimal floats and
//! label columns `label_0 … label_{ℓ−1}` holding `0` or `1`. An optional JSON
//! sidecar `<name>.meta.json` records `{name, n_features, n_labels, sha256}`,
//! where `sha256` is the hex digest of the CSV file bytes.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::format::write_atomic;
use crate::loss_embedding::Label;

use super::MultiLabelDataset;

/// Which columns hold labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum LabelColumns {
    /// Columns named `label_<k>`, which must cover `k = 0 … ℓ−1`.
    #[default]
    Prefixed,
    /// Explicit column names, in label order.
    Named(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub name: String,
    pub n_features: usize,
    pub n_labels: usize,
    pub sha256: String,
}

/// `<dir>/<stem>.meta.json` for `<dir>/<stem>.csv`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn read_sidecar(csv_path: &Path) -> Result<Option<Sidecar>> {
    let p = sidecar_path(csv_path);
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&std::fs::read(&p)?)?))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn label_positions(path: &Path, header: &[String], columns: &LabelColumns) -> Result<Vec<usize>> {
    match columns {
        LabelColumns::Named(names) => names
            .iter()
            .map(|n| {
                header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| parse_err(path, 1, format!("label column `{n}` not found")))
            })
            .collect(),
        LabelColumns::Prefixed => {
            let mut found: Vec<(usize, usize)> = Vec::new();
            for (col, h) in header.iter().enumerate() {
                if let Some(k) = h.strip_prefix("label_") {
                    let k: usize = k
                        .parse()
                        .map_err(|_| parse_err(path, 1, format!("bad label column name `{h}`")))?;
                    found.push((k, col));
                }
            }
            found.sort();
            if found.is_empty() {
                return Err(parse_err(path, 1, "no label_<k> columns"));
            }
            for (expect, (k, _)) in found.iter().enumerate() {
                if *k != expect {
                    return Err(parse_err(path, 1, format!("label columns must be label_0..label_{}, missing label_{expect}", found.len() - 1)));
                }
            }
            Ok(found.into_iter().map(|(_, c)| c).collect())
        }
    }
}

pub fn load_csv(path: &Path, label_columns: &LabelColumns) -> Result<MultiLabelDataset> {
    let bytes = std::fs::read(path)?;
    let file_sha = hex::encode(Sha256::digest(&bytes));
    let sidecar = read_sidecar(path)?;
    if let Some(s) = &sidecar {
        if s.sha256 != file_sha {
            return Err(Error::Format {
                what: "dataset sidecar",
                message: format!("sha256 mismatch for {}: sidecar {}, file {}", path.display(), s.sha256, file_sha),
            });
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_cols = label_positions(path, &header, label_columns)?;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|c| !label_cols.contains(c)).collect();
    let mut values = Vec::new();
    let mut ys = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        for &c in &feature_cols {
            let field = rec[c].trim();
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("column `{}`: `{field}` is not a number", header[c])))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column `{}`: non-finite value `{field}`", header[c])));
            }
            values.push(v);
        }
        let bits = label_cols
            .iter()
            .map(|&c| match rec[c].trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_err(path, line, format!("column `{}`: label `{other}` is not 0 or 1", header[c]))),
            })
            .collect::<Result<Vec<_>>>()?;
        ys.push(Label::new(bits)?);
    }
    if ys.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    let m = ys.len();
    let xs = DMatrix::from_row_slice(m, feature_cols.len(), &values);
    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();
    let name = match &sidecar {
        Some(s) => s.name.clone(),
        None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    let ds = MultiLabelDataset::new(name, xs, ys, names)?;
    if let Some(s) = &sidecar {
        if s.n_features != ds.d() || s.n_labels != ds.n_labels() {
            return Err(Error::Format {
                what: "dataset sidecar",
                message: format!(
                    "sidecar declares {} features and {} labels, file has {} and {}",
                    s.n_features,
                    s.n_labels,
                    ds.d(),
                    ds.n_labels()
                ),
            });
        }
    }
    Ok(ds)
}

/// Writes the CSV and its sidecar. Floats use shortest round-trip form.
pub fn write_csv(ds: &MultiLabelDataset, path: &Path) -> Result<Sidecar> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = ds.feature_names.clone();
    header.extend((0..ds.n_labels()).map(|k| format!("label_{k}")));
    w.write_record(&header).map_err(std::io::Error::other)?;
    for i in 0..ds.m() {
        let mut rec: Vec<String> = ds.xs.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.extend(ds.ys[i].bits().iter().map(|&b| if b { "1" } else { "0" }.to_string()));
        w.write_record(&rec).map_err(std::io::Error::other)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    let sidecar = Sidecar {
        name: ds.name.clone(),
        n_features: ds.d(),
        n_labels: ds.n_labels(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    write_atomic(path, &bytes)?;
    write_atomic(&sidecar_path(path), &serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn hand_written_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "tiny.csv", "a,b,label_0,label_1\n0.5,-1,1,0\n2e-1,3.25,0,0\n");
        let ds = load_csv(&p, &LabelColumns::Prefixed).unwrap();
        assert_eq!(ds.xs, DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 0.2, 3.25]));
        assert_eq!(ds.ys, vec![Label::from_bits(&[1, 0]).unwrap(), Label::zeros(2)]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.name, "tiny");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("ragged.csv", "a,label_0\n1,0\n2\n", 3),
            ("nonbinary.csv", "a,label_0\n1,0\n2,0\n3,2\n", 4),
            ("notnum.csv", "a,label_0\nx,0\n", 2),
        ];
        for (name, text, line) in cases {
            let p = write(dir.path(), name, text);
            match load_csv(&p, &LabelColumns::Prefixed) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{name}"),
                other => panic!("{name}: expected parse error, got {other:?}"),
            }
        }
        let p = write(dir.path(), "gap.csv", "a,label_0,label_2\n1,0,1\n");
        assert!(load_csv(&p, &LabelColumns::Prefixed).is_err());
    }

    #[test]
    fn named_label_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "n.csv", "happy,f1,sad\n1,0.5,0\n0,0.25,1\n");
        let columns = LabelColumns::Named(vec!["happy".into(), "sad".into()]);
        let ds = load_csv(&p, &columns).unwrap();
        assert_eq!(ds.d(), 1);
        assert_eq!(ds.ys[1], Label::from_bits(&[0, 1]).unwrap());
    }

    #[test]
    fn roundtrip_preserves_digest_and_checks_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let xs = DMatrix::from_row_slice(3, 2, &[0.1, 1.0 / 3.0, -7e-12, 5.0, 1e300, -0.0]);
        let ys = vec![Label::zeros(3), Label::from_bits(&[1, 0, 1]).unwrap(), Label::from_bits(&[1, 1, 1]).unwrap()];
        let ds = MultiLabelDataset::new("toy", xs, ys, MultiLabelDataset::default_feature_names(2)).unwrap();
        let p = dir.path().join("toy.csv");
        let side = write_csv(&ds, &p).unwrap();
        assert_eq!(side.n_features, 2);
        let back = load_csv(&p, &LabelColumns::Prefixed).unwrap();
        assert_eq!(back.digest(), ds.digest());
        assert_eq!(back.name, "toy");
        // tampering with the file is caught by the sidecar
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str("0,0,0,0,0\n");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(load_csv(&p, &LabelColumns::Prefixed), Err(Error::Format { .. })));
    }
}
