//! Finite synthetic tasks: a discrete feature support, a marginal over it and a
//! full conditional table over all `2^ℓ` labels. Every population quantity is
//! an exact finite sum.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::gaussian_posterior::GaussianPosterior;
use crate::loss_embedding::{decode_best, Label, LossEmbedding, LossKind};
use crate::seed::SeedStream;
use crate::stats::McEstimate;
use crate::surrogate_regression::LinearRegressor;

use super::MultiLabelDataset;

pub const MAX_SUPPORT: usize = 64;
pub const MAX_SYNTHETIC_LABELS: usize = 8;
const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    /// Standard normal directions scaled to unit length.
    Gaussian,
    /// `x_i = e_i`; requires `feature_dim == support_size`.
    OneHot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub support_size: usize,
    pub n_labels: usize,
    /// Symmetric Dirichlet parameter of each conditional row.
    pub concentration: f64,
    pub feature_dim: usize,
    pub features: FeatureKind,
    pub loss: LossKind,
    /// Weights of `ρ_X`; uniform when absent.
    pub marginal: Option<Vec<f64>>,
}

impl SyntheticConfig {
    /// Unit-norm Gaussian features in dimension 4, Hamming loss, uniform marginal.
    pub fn new(support_size: usize, n_labels: usize, concentration: f64) -> Self {
        Self {
            support_size,
            n_labels,
            concentration,
            feature_dim: 4,
            features: FeatureKind::Gaussian,
            loss: LossKind::Hamming,
            marginal: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.support_size == 0 || self.support_size > MAX_SUPPORT {
            return Err(Error::input(format!("support size must lie in 1..={MAX_SUPPORT}, got {}", self.support_size)));
        }
        if self.n_labels == 0 || self.n_labels > MAX_SYNTHETIC_LABELS {
            return Err(Error::input(format!("synthetic tasks support 1..={MAX_SYNTHETIC_LABELS} labels, got {}", self.n_labels)));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::input(format!("concentration must be positive and finite, got {}", self.concentration)));
        }
        if self.feature_dim == 0 {
            return Err(Error::input("feature dimension must be positive"));
        }
        if self.features == FeatureKind::OneHot && self.feature_dim != self.support_size {
            return Err(Error::input("one-hot features need feature_dim == support_size"));
        }
        Ok(())
    }
}

/// A finite data-generating distribution `ρ(x, y) = ρ(y|x) ρ_X(x)`.
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    /// One support point per row.
    pub x_support: DMatrix<f64>,
    pub marginal: Vec<f64>,
    /// `conditional[i][y.index()] = ρ(y | x_i)`.
    pub conditional: Vec<Vec<f64>>,
    pub embedding: LossEmbedding,
    labels: Vec<Label>,
    // loss_table[z * 2^ℓ + y] = Δ(z, y)
    loss_table: Vec<f64>,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::input(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::input(format!("{what} sums to {s}, expected 1")));
    }
    Ok(())
}

fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    let s: f64 = weights.iter().sum();
    if weights.iter().any(|&v| !(v >= 0.0 && v.is_finite())) || !(s > 0.0) {
        return Err(Error::input("marginal weights must be nonnegative with a positive sum"));
    }
    Ok(weights.iter().map(|v| v / s).collect())
}

/// Index drawn from a discrete distribution with a single uniform variate.
fn sample_index<R: Rng>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    // rounding left the cumulative sum just below 1
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Symmetric Dirichlet draw computed in log space, which stays valid for tiny
/// concentrations where plain Gamma variates underflow to zero.
fn dirichlet_row<R: Rng>(rng: &mut R, n: usize, a: f64) -> Vec<f64> {
    let gamma = Gamma::new(a + 1.0, 1.0).expect("shape is positive");
    let logs: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            // Gamma(a) = Gamma(a + 1) · U^{1/a}
            g.ln() + u.ln() / a
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Draws a random task. Deterministic in `seed`.
pub fn make_synthetic(seed: u64, config: &SyntheticConfig) -> Result<SyntheticTask> {
    config.validate()?;
    let stream = SeedStream::new(seed).derive("synthetic");
    let n = config.support_size;
    let d = config.feature_dim;
    let x_support = match config.features {
        FeatureKind::OneHot => DMatrix::identity(n, n),
        FeatureKind::Gaussian => {
            let mut rng = stream.derive("features").rng();
            let mut xs = DMatrix::zeros(n, d);
            for i in 0..n {
                loop {
                    let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-8 {
                        for (j, v) in row.iter().enumerate() {
                            xs[(i, j)] = v / norm;
                        }
                        break;
                    }
                }
            }
            xs
        }
    };
    let n_y = 1usize << config.n_labels;
    let mut rng = stream.derive("conditional").rng();
    let conditional = (0..n).map(|_| dirichlet_row(&mut rng, n_y, config.concentration)).collect();
    let marginal = match &config.marginal {
        Some(w) => {
            if w.len() != n {
                return Err(Error::dim("marginal weights", n, w.len()));
            }
            normalize(w)?
        }
        None => vec![1.0 / n as f64; n],
    };
    let embedding = LossEmbedding::new(config.loss, config.n_labels)?;
    SyntheticTask::new(x_support, marginal, conditional, embedding)
}

impl SyntheticTask {
    /// Builds a task from explicit tables. Support points must be distinct.
    pub fn new(
        x_support: DMatrix<f64>,
        marginal: Vec<f64>,
        conditional: Vec<Vec<f64>>,
        embedding: LossEmbedding,
    ) -> Result<Self> {
        let n = x_support.nrows();
        let l = embedding.n_labels();
        if n == 0 || n > MAX_SUPPORT {
            return Err(Error::input(format!("support size must lie in 1..={MAX_SUPPORT}, got {n}")));
        }
        if l > MAX_SYNTHETIC_LABELS {
            return Err(Error::input(format!("synthetic tasks support at most {MAX_SYNTHETIC_LABELS} labels, got {l}")));
        }
        crate::kernel_features::check_finite(&x_support, "support points")?;
        if marginal.len() != n {
            return Err(Error::dim("marginal", n, marginal.len()));
        }
        check_distribution(&marginal, "marginal")?;
        if conditional.len() != n {
            return Err(Error::dim("conditional rows", n, conditional.len()));
        }
        let n_y = 1usize << l;
        for (i, row) in conditional.iter().enumerate() {
            if row.len() != n_y {
                return Err(Error::dim("conditional row", n_y, row.len()));
            }
            check_distribution(row, &format!("conditional row {i}"))?;
        }
        for i in 0..n {
            for j in 0..i {
                if x_support.row(i) == x_support.row(j) {
                    return Err(Error::input(format!("support points {j} and {i} coincide")));
                }
            }
        }
        let labels: Vec<Label> = (0..n_y as u64).map(|i| Label::from_index(i, l)).collect();
        let mut loss_table = Vec::with_capacity(n_y * n_y);
        for z in &labels {
            for y in &labels {
                loss_table.push(embedding.loss(z, y)?);
            }
        }
        Ok(Self {
            x_support,
            marginal,
            conditional,
            embedding,
            labels,
            loss_table,
        })
    }

    pub fn support_size(&self) -> usize {
        self.x_support.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.x_support.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.embedding.n_labels()
    }

    /// Position of `x` in the support (exact match).
    pub fn index_of(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.feature_dim() {
            return Err(Error::dim("feature vector", self.feature_dim(), x.len()));
        }
        (0..self.support_size())
            .find(|&i| self.x_support.row(i).iter().zip(x).all(|(a, b)| a == b))
            .ok_or_else(|| Error::input("point lies outside the task support"))
    }

    fn loss_idx(&self, z: u64, y: usize) -> f64 {
        self.loss_table[z as usize * self.labels.len() + y]
    }

    /// `g*(x_i) = Σ_y ρ(y|x_i) φ(y)`.
    pub fn g_star(&self, i: usize) -> Result<DVector<f64>> {
        let row = self
            .conditional
            .get(i)
            .ok_or_else(|| Error::input(format!("support index {i} out of range")))?;
        let mut g = DVector::zeros(self.embedding.dim_h());
        let mut phi = vec![0.0; self.embedding.dim_h()];
        for (y, &p) in self.labels.iter().zip(row) {
            if p == 0.0 {
                continue;
            }
            phi.iter_mut().for_each(|v| *v = 0.0);
            self.embedding.write_phi(y, &mut phi);
            for (gk, pk) in g.iter_mut().zip(&phi) {
                *gk += p * pk;
            }
        }
        Ok(g)
    }

    pub fn g_star_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.g_star(self.index_of(x)?)
    }

    /// `g*` on every support point, one per row.
    pub fn g_star_matrix(&self) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.support_size(), self.embedding.dim_h());
        for i in 0..self.support_size() {
            out.set_row(i, &self.g_star(i)?.transpose());
        }
        Ok(out)
    }

    /// `sup_x ‖g*(x)‖`.
    pub fn g_star_sup_norm(&self) -> Result<f64> {
        let g = self.g_star_matrix()?;
        Ok((0..g.nrows()).map(|i| g.row(i).norm()).fold(0.0, f64::max))
    }

    /// `Σ_y ρ(y|x_i) Δ(z, y)`.
    pub fn conditional_risk(&self, i: usize, z: &Label) -> Result<f64> {
        if z.len() != self.n_labels() {
            return Err(Error::dim("label length", self.n_labels(), z.len()));
        }
        let row = self
            .conditional
            .get(i)
            .ok_or_else(|| Error::input(format!("support index {i} out of range")))?;
        let zi = z.index();
        Ok(row.iter().enumerate().map(|(y, &p)| p * self.loss_idx(zi, y)).sum())
    }

    /// `f*(x) = decode(g*(x))` per support point and the Bayes risk `E(f*)`.
    pub fn f_star_and_bayes_risk(&self) -> Result<(Vec<Label>, f64)> {
        let g = self.g_star_matrix()?;
        let f = (0..g.nrows())
            .map(|i| decode_best(&self.embedding, g.row(i).transpose().as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let risk = self.true_risk(&f)?;
        Ok((f, risk))
    }

    /// `argmin_z Σ_y ρ(y|x) Δ(z, y)` by enumeration, lexicographic ties.
    pub fn f_star_direct(&self) -> Result<Vec<Label>> {
        (0..self.support_size())
            .map(|i| {
                let mut best = (f64::INFINITY, 0u64);
                for zi in 0..self.labels.len() as u64 {
                    let r: f64 = self.conditional[i]
                        .iter()
                        .enumerate()
                        .map(|(y, &p)| p * self.loss_idx(zi, y))
                        .sum();
                    if r < best.0 {
                        best = (r, zi);
                    }
                }
                Ok(Label::from_index(best.1, self.n_labels()))
            })
            .collect()
    }

    /// Exact `E(f) = Σ_x ρ_X(x) Σ_y ρ(y|x) Δ(f(x), y)`; `predictions[i]` is `f(x_i)`.
    pub fn true_risk(&self, predictions: &[Label]) -> Result<f64> {
        if predictions.len() != self.support_size() {
            return Err(Error::dim("predictions", self.support_size(), predictions.len()));
        }
        let mut total = 0.0;
        for (i, z) in predictions.iter().enumerate() {
            total += self.marginal[i] * self.conditional_risk(i, z)?;
        }
        Ok(total)
    }

    /// Decoded predictions of a linear regressor on the support.
    pub fn decoded_predictions(&self, r: &LinearRegressor) -> Result<Vec<Label>> {
        let preds = r.predict_rows(&self.x_support)?;
        (0..preds.nrows())
            .map(|i| decode_best(&self.embedding, preds.row(i).transpose().as_slice()))
            .collect()
    }

    /// `E(decode ∘ g)` for `g(x) = W x`.
    pub fn true_risk_of_regressor(&self, r: &LinearRegressor) -> Result<f64> {
        self.true_risk(&self.decoded_predictions(r)?)
    }

    /// Excess risk `E(decode ∘ g) − E(f*)` of a linear regressor.
    pub fn excess_risk_of_regressor(&self, r: &LinearRegressor) -> Result<f64> {
        Ok(self.true_risk_of_regressor(r)? - self.f_star_and_bayes_risk()?.1)
    }

    /// `E_{f∼Q} E(f)`: regressors sampled from `Q` (draw `k` from `stream/k`),
    /// each scored exactly. Zero variance gives the exact risk of the mean.
    pub fn expected_posterior_risk(&self, q: &GaussianPosterior, samples: usize, stream: &SeedStream) -> Result<McEstimate> {
        if samples == 0 {
            return Err(Error::input("at least one posterior sample is required"));
        }
        if q.variance == 0.0 {
            return Ok(McEstimate::exact(self.true_risk_of_regressor(&q.mean)?));
        }
        let risks = (0..samples)
            .map(|k| self.true_risk_of_regressor(&q.sample_regressor(&stream.at(k as u64))))
            .collect::<Result<Vec<_>>>()?;
        Ok(McEstimate::from_samples(&risks))
    }

    /// `R(g) = Σ_x ρ_X(x) Σ_y ρ(y|x) ‖g(x) − φ(y)‖²`; `g` holds `g(x_i)` in row `i`.
    pub fn population_quadratic_risk(&self, g: &DMatrix<f64>) -> Result<f64> {
        let h = self.embedding.dim_h();
        if g.nrows() != self.support_size() || g.ncols() != h {
            return Err(Error::dim("predictions on the support", self.support_size() * h, g.nrows() * g.ncols()));
        }
        let mut phi = vec![0.0; h];
        let mut total = 0.0;
        for i in 0..self.support_size() {
            let mut inner = 0.0;
            for (y, &p) in self.labels.iter().zip(&self.conditional[i]) {
                if p == 0.0 {
                    continue;
                }
                phi.iter_mut().for_each(|v| *v = 0.0);
                self.embedding.write_phi(y, &mut phi);
                let sq: f64 = (0..h).map(|k| (g[(i, k)] - phi[k]).powi(2)).sum();
                inner += p * sq;
            }
            total += self.marginal[i] * inner;
        }
        Ok(total)
    }

    /// Population `E‖W x − φ(y)‖`, exact.
    pub fn population_absolute_risk(&self, r: &LinearRegressor) -> Result<f64> {
        let preds = r.predict_rows(&self.x_support)?;
        let h = self.embedding.dim_h();
        let mut phi = vec![0.0; h];
        let mut total = 0.0;
        for i in 0..self.support_size() {
            let mut inner = 0.0;
            for (y, &p) in self.labels.iter().zip(&self.conditional[i]) {
                if p == 0.0 {
                    continue;
                }
                phi.iter_mut().for_each(|v| *v = 0.0);
                self.embedding.write_phi(y, &mut phi);
                let sq: f64 = (0..h).map(|k| (preds[(i, k)] - phi[k]).powi(2)).sum();
                inner += p * sq.sqrt();
            }
            total += self.marginal[i] * inner;
        }
        Ok(total)
    }

    /// `m` i.i.d. pairs: `x ∼ ρ_X`, then `y ∼ ρ(·|x)`. Deterministic in `stream`.
    pub fn sample_training_set(&self, m: usize, stream: &SeedStream) -> Result<MultiLabelDataset> {
        if m == 0 {
            return Err(Error::input("a training set needs at least one example"));
        }
        let mut rng = stream.rng();
        let d = self.feature_dim();
        let mut xs = DMatrix::zeros(m, d);
        let mut ys = Vec::with_capacity(m);
        for r in 0..m {
            let i = sample_index(&mut rng, &self.marginal);
            xs.set_row(r, &self.x_support.row(i));
            let y = sample_index(&mut rng, &self.conditional[i]);
            ys.push(self.labels[y].clone());
        }
        MultiLabelDataset::new("synthetic", xs, ys, MultiLabelDataset::default_feature_names(d))
    }

    /// `sup_x ‖x‖` over the support.
    pub fn kappa(&self) -> f64 {
        (0..self.support_size())
            .map(|i| self.x_support.row(i).norm())
            .fold(0.0, f64::max)
    }
}
