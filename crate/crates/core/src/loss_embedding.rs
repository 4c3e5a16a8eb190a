//! Implicit loss embeddings for multi-label tasks and the decoders that turn
//! surrogate outputs back into labels.
//!
//! A loss `Δ(z, y)` is embedded as `⟨ψ(z), φ(y)⟩` in a finite-dimensional
//! space `H`. Two losses are supported:
//!
//! * Hamming, with `dim H = 2ℓ + 1`,
//!   `ψ(z) = (1, 𝟙[z₁=0], …, 𝟙[z_ℓ=0], 𝟙[z₁=1], …, 𝟙[z_ℓ=1])` and
//!   `φ(y) = (1, −𝟙[y₁=0]/ℓ, …, −𝟙[y_ℓ=1]/ℓ)`;
//! * 0–1, with `dim H = 2^ℓ + 1`, `ψ(z) = (1, e_z)` and `φ(y) = (1, −e_y)`.
//!
//! `ψ` has entries in {0, 1}, so `c_Δ = sup ‖ψ(z)‖` is `√(ℓ + 1)` for Hamming
//! and `√2` for 0–1.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels longer than this are never enumerated.
pub const MAX_ENUMERATED_LABELS: usize = 20;

/// A binary label vector `z ∈ {0,1}^ℓ`. Ordering is lexicographic with 0 < 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label(Vec<bool>);

impl Label {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::input("a label needs at least one slot"));
        }
        Ok(Self(bits))
    }

    /// Builds a label from 0/1 integers, rejecting anything else.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let bits = bits
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::input(format!("label entry {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits)
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0);
        Self(vec![false; len])
    }

    /// The `index`-th label of length `len` in lexicographic order
    /// (the first slot is the most significant bit).
    pub fn from_index(index: u64, len: usize) -> Self {
        assert!(len > 0 && len <= 63);
        Self((0..len).map(|k| (index >> (len - 1 - k)) & 1 == 1).collect())
    }

    /// Inverse of [`Label::from_index`].
    pub fn index(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, k: usize) -> bool {
        self.0[k]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// All labels of length `len` in lexicographic order.
pub fn all_labels(len: usize) -> Result<impl Iterator<Item = Label>> {
    if len == 0 || len > MAX_ENUMERATED_LABELS {
        return Err(Error::input(format!(
            "cannot enumerate labels of length {len} (supported: 1..={MAX_ENUMERATED_LABELS})"
        )));
    }
    Ok((0..1u64 << len).map(move |i| Label::from_index(i, len)))
}

fn check_same_len(z: &Label, y: &Label) -> Result<()> {
    if z.len() != y.len() {
        return Err(Error::dim("label length", z.len(), y.len()));
    }
    Ok(())
}

/// Fraction of slots where `z` and `y` disagree.
pub fn hamming_loss(z: &Label, y: &Label) -> Result<f64> {
    check_same_len(z, y)?;
    let diff = z.bits().iter().zip(y.bits()).filter(|(a, b)| a != b).count();
    Ok(diff as f64 / z.len() as f64)
}

pub fn zero_one_loss(z: &Label, y: &Label) -> Result<f64> {
    check_same_len(z, y)?;
    Ok(if z == y { 0.0 } else { 1.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Hamming,
    ZeroOne,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Hamming => "hamming",
            LossKind::ZeroOne => "zero-one",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(LossKind::Hamming),
            "zero-one" | "zero_one" | "01" => Ok(LossKind::ZeroOne),
            other => Err(Error::input(format!("unknown loss `{other}` (expected hamming or zero-one)"))),
        }
    }
}

/// A task loss with an explicit finite-dimensional embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEmbedding {
    kind: LossKind,
    n_labels: usize,
    dim_h: usize,
    c_delta: f64,
}

impl LossEmbedding {
    pub fn hamming(n_labels: usize) -> Result<Self> {
        if n_labels < 1 {
            return Err(Error::input("the Hamming embedding needs at least one label slot"));
        }
        let mut e = Self {
            kind: LossKind::Hamming,
            n_labels,
            dim_h: 2 * n_labels + 1,
            c_delta: 0.0,
        };
        e.c_delta = if n_labels <= MAX_ENUMERATED_LABELS {
            e.enumerate_c_delta()
        } else {
            ((n_labels + 1) as f64).sqrt()
        };
        Ok(e)
    }

    pub fn zero_one(n_labels: usize) -> Result<Self> {
        if !(1..=MAX_ENUMERATED_LABELS).contains(&n_labels) {
            return Err(Error::input(format!(
                "the 0-1 embedding supports 1..={MAX_ENUMERATED_LABELS} label slots, got {n_labels}"
            )));
        }
        let mut e = Self {
            kind: LossKind::ZeroOne,
            n_labels,
            dim_h: (1usize << n_labels) + 1,
            c_delta: 0.0,
        };
        e.c_delta = e.enumerate_c_delta();
        Ok(e)
    }

    pub fn new(kind: LossKind, n_labels: usize) -> Result<Self> {
        match kind {
            LossKind::Hamming => Self::hamming(n_labels),
            LossKind::ZeroOne => Self::zero_one(n_labels),
        }
    }

    fn enumerate_c_delta(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..1u64 << self.n_labels {
            let z = Label::from_index(i, self.n_labels);
            let sq: f64 = self.psi_sparse(&z).iter().map(|(_, v)| v * v).sum();
            best = best.max(sq);
        }
        best.sqrt()
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    /// `sup_z ‖ψ(z)‖`.
    pub fn c_delta(&self) -> f64 {
        self.c_delta
    }

    /// `max ‖φ(y) − φ(y′)‖` over label pairs: `√(2/ℓ)` for Hamming, `√2` for 0–1.
    pub fn phi_diameter(&self) -> f64 {
        match self.kind {
            LossKind::Hamming => (2.0 / self.n_labels as f64).sqrt(),
            LossKind::ZeroOne => std::f64::consts::SQRT_2,
        }
    }

    fn check_label(&self, z: &Label) -> Result<()> {
        if z.len() != self.n_labels {
            return Err(Error::dim("label length", self.n_labels, z.len()));
        }
        Ok(())
    }

    fn check_vector(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.dim_h {
            return Err(Error::dim("embedding vector", self.dim_h, h.len()));
        }
        Ok(())
    }

    /// The task loss evaluated directly (not through the embedding).
    pub fn loss(&self, z: &Label, y: &Label) -> Result<f64> {
        self.check_label(z)?;
        match self.kind {
            LossKind::Hamming => hamming_loss(z, y),
            LossKind::ZeroOne => zero_one_loss(z, y),
        }
    }

    /// Nonzero entries of `ψ(z)` in increasing index order. No length check.
    fn psi_sparse(&self, z: &Label) -> Vec<(usize, f64)> {
        let l = self.n_labels;
        match self.kind {
            LossKind::Hamming => {
                let mut out = Vec::with_capacity(l + 1);
                out.push((0, 1.0));
                out.extend((0..l).filter(|&k| !z.get(k)).map(|k| (1 + k, 1.0)));
                out.extend((0..l).filter(|&k| z.get(k)).map(|k| (1 + l + k, 1.0)));
                out
            }
            LossKind::ZeroOne => vec![(0, 1.0), (1 + z.index() as usize, 1.0)],
        }
    }

    pub fn psi(&self, z: &Label) -> Result<DVector<f64>> {
        self.check_label(z)?;
        let mut v = DVector::zeros(self.dim_h);
        for (i, x) in self.psi_sparse(z) {
            v[i] = x;
        }
        Ok(v)
    }

    pub fn phi(&self, y: &Label) -> Result<DVector<f64>> {
        self.check_label(y)?;
        let mut v = DVector::zeros(self.dim_h);
        self.write_phi(y, v.as_mut_slice());
        Ok(v)
    }

    /// Writes `φ(y)` into a zeroed buffer of length `dim_h`. No checks.
    pub(crate) fn write_phi(&self, y: &Label, out: &mut [f64]) {
        let l = self.n_labels;
        out[0] = 1.0;
        match self.kind {
            LossKind::Hamming => {
                let w = -1.0 / l as f64;
                for k in 0..l {
                    if y.get(k) {
                        out[1 + l + k] = w;
                    } else {
                        out[1 + k] = w;
                    }
                }
            }
            LossKind::ZeroOne => out[1 + y.index() as usize] = -1.0,
        }
    }

    /// `⟨ψ(z), h⟩`, summed over the support of `ψ(z)` in index order.
    pub fn psi_dot(&self, z: &Label, h: &[f64]) -> Result<f64> {
        self.check_label(z)?;
        self.check_vector(h)?;
        Ok(self.psi_sparse(z).iter().map(|&(i, v)| v * h[i]).sum())
    }
}

/// Naive decoder: `argmin_z ⟨ψ(z), h⟩` over all `2^ℓ` labels.
///
/// Exact ties resolve to the lexicographically smallest label.
pub fn decode(embedding: &LossEmbedding, h: &[f64]) -> Result<Label> {
    embedding.check_vector(h)?;
    let l = embedding.n_labels();
    if l > MAX_ENUMERATED_LABELS {
        return Err(Error::input(format!(
            "naive decoding is limited to {MAX_ENUMERATED_LABELS} label slots, got {l}"
        )));
    }
    let mut best_index = 0u64;
    let mut best_value = f64::INFINITY;
    for i in 0..1u64 << l {
        let z = Label::from_index(i, l);
        let value: f64 = embedding.psi_sparse(&z).iter().map(|&(j, v)| v * h[j]).sum();
        if value < best_value {
            best_value = value;
            best_index = i;
        }
    }
    if !best_value.is_finite() && best_value != f64::NEG_INFINITY {
        return Err(Error::input("cannot decode a non-finite embedding vector"));
    }
    Ok(Label::from_index(best_index, l))
}

/// Hamming-only decoder that minimizes each slot independently; chooses 0 on ties,
/// which reproduces [`decode`] exactly.
pub fn decode_hamming_fast(embedding: &LossEmbedding, h: &[f64]) -> Result<Label> {
    if embedding.kind() != LossKind::Hamming {
        return Err(Error::input("the per-coordinate decoder requires a Hamming embedding"));
    }
    embedding.check_vector(h)?;
    let l = embedding.n_labels();
    let bits = (0..l).map(|k| h[1 + l + k] < h[1 + k]).collect();
    Label::new(bits)
}

/// Picks the fastest exact decoder for the embedding.
pub fn decode_best(embedding: &LossEmbedding, h: &[f64]) -> Result<Label> {
    match embedding.kind() {
        LossKind::Hamming => decode_hamming_fast(embedding, h),
        LossKind::ZeroOne => decode(embedding, h),
    }
}
