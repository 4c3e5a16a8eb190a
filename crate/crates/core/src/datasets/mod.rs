//! Multi-label datasets: CSV ingestion and finite synthetic tasks with exact oracles.

mod csv_io;
mod synthetic;

pub use csv_io::{load_csv, read_sidecar, sidecar_path, write_csv, LabelColumns, Sidecar};
pub use synthetic::{make_synthetic, FeatureKind, SyntheticConfig, SyntheticTask};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel_features::check_finite;
use crate::loss_embedding::{Label, LossEmbedding};
use crate::surrogate_regression::RegressionData;

/// Observed pairs `(xᵢ, yᵢ)` with a content digest.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiLabelDataset {
    pub name: String,
    /// `m × d`, one sample per row.
    pub xs: DMatrix<f64>,
    pub ys: Vec<Label>,
    pub feature_names: Vec<String>,
    digest: String,
}

impl MultiLabelDataset {
    pub fn new(name: impl Into<String>, xs: DMatrix<f64>, ys: Vec<Label>, feature_names: Vec<String>) -> Result<Self> {
        let m = xs.nrows();
        if m == 0 {
            return Err(Error::input("a dataset needs at least one example"));
        }
        if ys.len() != m {
            return Err(Error::dim("number of labels", m, ys.len()));
        }
        if feature_names.len() != xs.ncols() {
            return Err(Error::dim("feature names", xs.ncols(), feature_names.len()));
        }
        check_finite(&xs, "feature matrix")?;
        let l = ys[0].len();
        if let Some(bad) = ys.iter().find(|y| y.len() != l) {
            return Err(Error::dim("label length", l, bad.len()));
        }
        let digest = content_digest(&xs, &ys);
        Ok(Self {
            name: name.into(),
            xs,
            ys,
            feature_names,
            digest,
        })
    }

    /// Default feature names `x_0, x_1, …`.
    pub fn default_feature_names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("x_{j}")).collect()
    }

    pub fn m(&self) -> usize {
        self.xs.nrows()
    }

    pub fn d(&self) -> usize {
        self.xs.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.ys[0].len()
    }

    /// SHA-256 over the dimensions, the bit patterns of the features
    /// (row-major) and the label bits.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn regression_data(&self, embedding: &LossEmbedding) -> Result<RegressionData> {
        RegressionData::new(embedding, &self.xs, &self.ys)
    }
}

fn content_digest(xs: &DMatrix<f64>, ys: &[Label]) -> String {
    let mut h = Sha256::new();
    h.update(b"pacile/dataset/v1");
    h.update((xs.nrows() as u64).to_le_bytes());
    h.update((xs.ncols() as u64).to_le_bytes());
    h.update((ys[0].len() as u64).to_le_bytes());
    for i in 0..xs.nrows() {
        for j in 0..xs.ncols() {
            // canonicalize -0.0 so that the digest depends on values only
            let v = if xs[(i, j)] == 0.0 { 0.0f64 } else { xs[(i, j)] };
            h.update(v.to_bits().to_le_bytes());
        }
    }
    for y in ys {
        h.update(y.bits().iter().map(|&b| b as u8).collect::<Vec<u8>>());
    }
    hex::encode(h.finalize())
}
