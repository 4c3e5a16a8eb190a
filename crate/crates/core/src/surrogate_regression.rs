//! Linear surrogate regressors `g(x) = W X(x)` and their kernel ridge fit.
//!
//! The ridge objective is the mean-squared form
//! `(1/m) Σ ‖g(xᵢ) − φ(yᵢ)‖² + λ ‖W‖_F²`, so the normal equations read
//! `(XᵀX + mλ I) Wᵀ = XᵀΦ`. Users coming from the sum-of-squares convention
//! `Σ ‖·‖² + λ' ‖W‖²` should pass `λ = λ' / m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel_features::{self, Kernel};
use crate::loss_embedding::{decode_best, Label, LossEmbedding};

/// Largest condition number accepted by the ridge solver.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative residual tolerance on the normal equations.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// A `dim_h × dim_f` matrix mapping feature space to embedding space.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRegressor {
    w: DMatrix<f64>,
}

impl LinearRegressor {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() == 0 || w.ncols() == 0 {
            return Err(Error::input("a regressor needs positive dimensions"));
        }
        kernel_features::check_finite(&w, "regressor")?;
        Ok(Self { w })
    }

    pub fn zeros(dim_h: usize, dim_f: usize) -> Self {
        assert!(dim_h > 0 && dim_f > 0);
        Self {
            w: DMatrix::zeros(dim_h, dim_f),
        }
    }

    /// Wraps a matrix produced by internal arithmetic; finiteness is checked
    /// by the callers that can fail.
    pub(crate) fn from_matrix_unchecked(w: DMatrix<f64>) -> Self {
        Self { w }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.w
    }

    pub fn dim_h(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim_f(&self) -> usize {
        self.w.ncols()
    }

    /// `N = dim_h · dim_f`.
    pub fn n_params(&self) -> usize {
        self.w.len()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.w.norm()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.w.norm_squared()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        self.w.clone().singular_values().max()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }

    /// `W x`.
    pub fn predict(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim_f() {
            return Err(Error::dim("feature vector", self.dim_f(), x.len()));
        }
        Ok(&self.w * DVector::from_column_slice(x))
    }

    /// Predictions for every row of `xs`, as an `m × dim_h` matrix.
    pub fn predict_rows(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if xs.ncols() != self.dim_f() {
            return Err(Error::dim("feature columns", self.dim_f(), xs.ncols()));
        }
        Ok(xs * self.w.transpose())
    }
}

/// `W X(x)` for one input.
pub fn predict_embedding(r: &LinearRegressor, x: &[f64]) -> Result<DVector<f64>> {
    r.predict(x)
}

/// Anything that maps inputs to points of `H` and has an RKHS norm.
pub trait SurrogateModel {
    fn dim_h(&self) -> usize;

    /// `m × dim_h` matrix of outputs, one row per row of `xs`.
    fn predict_rows(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    /// `‖w‖²` in the Hilbert-Schmidt norm of the operator.
    fn norm_sq(&self) -> f64;
}

impl SurrogateModel for LinearRegressor {
    fn dim_h(&self) -> usize {
        self.dim_h()
    }

    fn predict_rows(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        LinearRegressor::predict_rows(self, xs)
    }

    fn norm_sq(&self) -> f64 {
        self.frobenius_norm_sq()
    }
}

/// Inputs with embedded targets `φ(yᵢ)` precomputed.
#[derive(Clone, Debug)]
pub struct RegressionData {
    /// `m × d` inputs.
    pub xs: DMatrix<f64>,
    /// `m × dim_h` rows `φ(yᵢ)`.
    pub targets: DMatrix<f64>,
    pub labels: Vec<Label>,
    /// `‖xᵢ‖²`, which is `k(xᵢ, xᵢ)` for the linear kernel.
    pub sq_norms: Vec<f64>,
}

impl RegressionData {
    pub fn new(embedding: &LossEmbedding, xs: &DMatrix<f64>, ys: &[Label]) -> Result<Self> {
        let m = xs.nrows();
        if m == 0 {
            return Err(Error::input("empty dataset"));
        }
        if ys.len() != m {
            return Err(Error::dim("number of labels", m, ys.len()));
        }
        kernel_features::check_finite(xs, "input matrix")?;
        let h = embedding.dim_h();
        let mut targets = DMatrix::zeros(m, h);
        let mut buf = vec![0.0; h];
        for (i, y) in ys.iter().enumerate() {
            if y.len() != embedding.n_labels() {
                return Err(Error::dim("label length", embedding.n_labels(), y.len()));
            }
            buf.iter_mut().for_each(|v| *v = 0.0);
            embedding.write_phi(y, &mut buf);
            for (j, v) in buf.iter().enumerate() {
                targets[(i, j)] = *v;
            }
        }
        let sq_norms = xs.row_iter().map(|r| r.norm_squared()).collect();
        Ok(Self {
            xs: xs.clone(),
            targets,
            labels: ys.to_vec(),
            sq_norms,
        })
    }

    pub fn m(&self) -> usize {
        self.xs.nrows()
    }

    pub fn dim_f(&self) -> usize {
        self.xs.ncols()
    }

    pub fn dim_h(&self) -> usize {
        self.targets.ncols()
    }

    pub fn mean_sq_norm(&self) -> f64 {
        self.sq_norms.iter().sum::<f64>() / self.m() as f64
    }

    pub(crate) fn check_regressor(&self, w: &DMatrix<f64>) -> Result<()> {
        if w.nrows() != self.dim_h() {
            return Err(Error::dim("regressor rows (dim_h)", self.dim_h(), w.nrows()));
        }
        if w.ncols() != self.dim_f() {
            return Err(Error::dim("regressor columns (dim_f)", self.dim_f(), w.ncols()));
        }
        Ok(())
    }

    /// `Φ − X Wᵀ`, one residual per row.
    pub(crate) fn residuals(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = self.targets.clone();
        r.gemm(-1.0, &self.xs, &w.transpose(), 1.0);
        r
    }
}

pub(crate) fn mean_sq_row_norm(r: &DMatrix<f64>) -> f64 {
    r.norm_squared() / r.nrows() as f64
}

pub(crate) fn mean_row_norm(r: &DMatrix<f64>) -> f64 {
    let m = r.nrows();
    let mut sq = vec![0.0; m];
    for col in r.column_iter() {
        for (i, v) in col.iter().enumerate() {
            sq[i] += v * v;
        }
    }
    sq.iter().map(|s| s.sqrt()).sum::<f64>() / m as f64
}

/// `(1/m) Σ ‖φ(yᵢ) − W xᵢ‖²`.
pub fn empirical_quadratic_risk(r: &LinearRegressor, data: &RegressionData) -> Result<f64> {
    data.check_regressor(r.matrix())?;
    Ok(mean_sq_row_norm(&data.residuals(r.matrix())))
}

/// `(1/m) Σ ‖φ(yᵢ) − W xᵢ‖`.
pub fn empirical_absolute_risk(r: &LinearRegressor, data: &RegressionData) -> Result<f64> {
    data.check_regressor(r.matrix())?;
    Ok(mean_row_norm(&data.residuals(r.matrix())))
}

/// Decoded predictions `f(xᵢ) = decode(g(xᵢ))` for a prediction matrix.
pub fn decode_rows(embedding: &LossEmbedding, preds: &DMatrix<f64>) -> Result<Vec<Label>> {
    if preds.ncols() != embedding.dim_h() {
        return Err(Error::dim("prediction columns", embedding.dim_h(), preds.ncols()));
    }
    let mut buf = vec![0.0; preds.ncols()];
    preds
        .row_iter()
        .map(|row| {
            for (b, v) in buf.iter_mut().zip(row.iter()) {
                *b = *v;
            }
            decode_best(embedding, &buf)
        })
        .collect()
}

pub(crate) fn task_risk_from_predictions(
    embedding: &LossEmbedding,
    preds: &DMatrix<f64>,
    labels: &[Label],
) -> Result<f64> {
    let decoded = decode_rows(embedding, preds)?;
    let mut total = 0.0;
    for (z, y) in decoded.iter().zip(labels) {
        total += embedding.loss(z, y)?;
    }
    Ok(total / labels.len() as f64)
}

/// Mean task loss of the plug-in predictor `decode ∘ g`.
pub fn empirical_task_risk(
    r: &LinearRegressor,
    embedding: &LossEmbedding,
    data: &RegressionData,
) -> Result<f64> {
    data.check_regressor(r.matrix())?;
    let preds = r.predict_rows(&data.xs)?;
    task_risk_from_predictions(embedding, &preds, &data.labels)
}

/// The ridge objective `(1/m) Σ ‖g(xᵢ) − φ(yᵢ)‖² + λ ‖W‖_F²`.
pub fn krr_objective(r: &LinearRegressor, data: &RegressionData, lambda: f64) -> Result<f64> {
    Ok(empirical_quadratic_risk(r, data)? + lambda * r.frobenius_norm_sq())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::input(format!("regularization must be positive, got {lambda}")));
    }
    Ok(())
}

/// Solves the SPD system `a x = b` with a condition guard and a residual check.
pub(crate) fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = a.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Numerical {
            message: format!("{what} system is too ill-conditioned"),
            condition,
        });
    }
    let chol = a.clone().cholesky().ok_or_else(|| Error::Numerical {
        message: format!("{what} system is not positive definite"),
        condition,
    })?;
    let x = chol.solve(b);
    let resid = (a * &x - b).norm();
    let scale = a.norm() * x.norm() + b.norm();
    if scale > 0.0 && !(resid <= RESIDUAL_TOL * scale) {
        return Err(Error::Numerical {
            message: format!("{what} residual {resid:e} exceeds tolerance"),
            condition,
        });
    }
    Ok(x)
}

/// Kernel ridge regression with an explicit feature map (the `ILE(λ)` fit).
pub fn fit_krr(kernel: &Kernel, data: &RegressionData, lambda: f64) -> Result<LinearRegressor> {
    check_lambda(lambda)?;
    if !kernel.has_explicit_features() {
        return Err(Error::input(format!(
            "kernel {} has no explicit feature map; use fit_krr_dual",
            kernel.name()
        )));
    }
    let m = data.m() as f64;
    let mut a = data.xs.transpose() * &data.xs;
    for i in 0..a.nrows() {
        a[(i, i)] += m * lambda;
    }
    let a = (&a + a.transpose()) * 0.5;
    let b = data.xs.transpose() * &data.targets;
    let wt = spd_solve(&a, &b, "ridge normal-equation")?;
    LinearRegressor::new(wt.transpose())
}

/// Ridge solution in coefficient form: `g(x) = Σᵢ k(x, xᵢ) cᵢ`.
///
/// Equivalently `g(x) = Σᵢ αᵢ(x) φ(yᵢ)` with `α(x) = (K + mλI)⁻¹ k_x`.
#[derive(Clone, Debug)]
pub struct DualRegressor {
    pub kernel: Kernel,
    pub train_xs: DMatrix<f64>,
    /// `m × dim_h` matrix `C = (K + mλI)⁻¹ Φ`.
    pub coef: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl DualRegressor {
    /// For the linear kernel, the explicit matrix `W = Cᵀ X`.
    pub fn to_linear(&self) -> Result<LinearRegressor> {
        if !self.kernel.has_explicit_features() {
            return Err(Error::input("only linear-kernel dual models have an explicit W"));
        }
        LinearRegressor::new(self.coef.transpose() * &self.train_xs)
    }

    /// Training-point weights `α(x)` for a query input.
    pub fn loss_trick_weights(&self, x: &[f64], lambda: f64) -> Result<DVector<f64>> {
        let q = DMatrix::from_row_slice(1, x.len(), x);
        let kx = kernel_features::cross_gram(&self.kernel, &self.train_xs, &q)?;
        let m = self.train_xs.nrows();
        let mut a = self.gram.clone();
        for i in 0..m {
            a[(i, i)] += m as f64 * lambda;
        }
        let alpha = spd_solve(&a, &kx, "dual ridge")?;
        Ok(alpha.column(0).into_owned())
    }
}

impl SurrogateModel for DualRegressor {
    fn dim_h(&self) -> usize {
        self.coef.ncols()
    }

    fn predict_rows(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = kernel_features::cross_gram(&self.kernel, xs, &self.train_xs)?;
        Ok(k * &self.coef)
    }

    fn norm_sq(&self) -> f64 {
        (self.coef.transpose() * &self.gram * &self.coef).trace()
    }
}

/// Kernel ridge regression through the `m × m` Gram system.
pub fn fit_krr_dual(kernel: &Kernel, data: &RegressionData, lambda: f64) -> Result<DualRegressor> {
    check_lambda(lambda)?;
    let gram = kernel_features::gram_matrix(kernel, &data.xs)?;
    let m = data.m();
    let mut a = gram.clone();
    for i in 0..m {
        a[(i, i)] += m as f64 * lambda;
    }
    let coef = spd_solve(&a, &data.targets, "dual ridge")?;
    Ok(DualRegressor {
        kernel: *kernel,
        train_xs: data.xs.clone(),
        coef,
        gram,
    })
}

/// `(1/m) Σ ‖φ(yᵢ) − g(xᵢ)‖²` for any surrogate model.
pub fn model_quadratic_risk(model: &dyn SurrogateModel, data: &RegressionData) -> Result<f64> {
    let preds = model.predict_rows(&data.xs)?;
    if preds.ncols() != data.dim_h() {
        return Err(Error::dim("model output dimension", data.dim_h(), preds.ncols()));
    }
    Ok(mean_sq_row_norm(&(&data.targets - preds)))
}
