use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian_posterior::{GaussianPosterior, Parametrization, PriorConfig};
use crate::seed::SeedStream;
use crate::stats::McEstimate;
use crate::surrogate_regression::{LinearRegressor, RegressionData};

/// `out = w + sd · eps`, entrywise (the same arithmetic as posterior sampling).
pub(crate) fn perturb(w: &DMatrix<f64>, sd: f64, eps: &DMatrix<f64>, out: &mut DMatrix<f64>) {
    for ((o, a), e) in out.iter_mut().zip(w.iter()).zip(eps.iter()) {
        *o = a + e * sd;
    }
}

/// A training set together with the prior and the posterior variance.
///
/// Objectives are evaluated on transposed copies (`d × m` inputs, `dim_h × m`
/// targets) so that per-sample residuals are contiguous columns.
#[derive(Clone, Debug)]
pub struct Problem<'a> {
    pub data: &'a RegressionData,
    pub prior: PriorConfig,
    pub parametrization: Parametrization,
    variance: f64,
    lambda: f64,
    /// `β(x_k) = σ′² · dim_h · k(x_k, x_k)`.
    beta: Vec<f64>,
    targets_t: DMatrix<f64>,
    xs_t: DMatrix<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(data: &'a RegressionData, prior: PriorConfig, parametrization: Parametrization) -> Result<Self> {
        prior.validate()?;
        let variance = parametrization.variance(&prior);
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::input(format!("posterior variance must be nonnegative, got {variance}")));
        }
        let h = data.dim_h() as f64;
        Ok(Self {
            data,
            prior,
            parametrization,
            variance,
            lambda: prior.lambda(),
            beta: data.sq_norms.iter().map(|n| variance * h * n).collect(),
            targets_t: data.targets.transpose(),
            xs_t: data.xs.transpose(),
        })
    }

    /// Same problem with a different penalty weight (used by tests and the
    /// pure-penalty flow).
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `λ_m^α(t) = 1 / (2 σ₀² m^α)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn m(&self) -> usize {
        self.data.m()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.data.dim_h(), self.data.dim_f())
    }

    pub fn posterior(&self, w: &LinearRegressor) -> GaussianPosterior {
        GaussianPosterior {
            mean: w.clone(),
            variance: self.variance,
            parametrization: self.parametrization,
        }
    }

    pub(crate) fn check(&self, w: &DMatrix<f64>) -> Result<()> {
        self.data.check_regressor(w)
    }

    /// Residual columns `φ(y_k) − V x_k`, as a `dim_h × m` matrix.
    pub(crate) fn residuals_t(&self, v: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        out.copy_from(&self.targets_t);
        out.gemm(-1.0, v, &self.xs_t, 1.0);
    }

    /// `(L(V), B(V))`: mean absolute and mean squared residual norms.
    pub(crate) fn sample_losses(&self, v: &DMatrix<f64>, buf: &mut DMatrix<f64>) -> (f64, f64) {
        self.residuals_t(v, buf);
        let (mut l, mut b) = (0.0, 0.0);
        for col in buf.column_iter() {
            let sq = col.norm_squared();
            l += sq.sqrt();
            b += sq;
        }
        let m = self.m() as f64;
        (l / m, b / m)
    }

    pub(crate) fn residual_buffer(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.data.dim_h(), self.m())
    }

    pub fn penalty(&self, w: &LinearRegressor) -> f64 {
        self.lambda * w.frobenius_norm_sq()
    }

    /// `L(V) = (1/m) Σ ‖φ(yᵢ) − V xᵢ‖`.
    pub fn loss_l(&self, v: &LinearRegressor) -> Result<f64> {
        self.check(v.matrix())?;
        Ok(self.sample_losses(v.matrix(), &mut self.residual_buffer()).0)
    }

    /// `B(V) = (1/m) Σ ‖φ(yᵢ) − V xᵢ‖²`.
    pub fn control_variate_b(&self, v: &LinearRegressor) -> Result<f64> {
        self.check(v.matrix())?;
        Ok(self.sample_losses(v.matrix(), &mut self.residual_buffer()).1)
    }

    /// Relaxed objective `Ĵ_c(W) = (1/m) Σ √(β_k + ‖r_k‖²) + λ ‖W‖²`.
    pub fn objective_j_c(&self, w: &LinearRegressor) -> Result<f64> {
        self.check(w.matrix())?;
        let mut r = self.residual_buffer();
        self.residuals_t(w.matrix(), &mut r);
        let data: f64 = r
            .column_iter()
            .zip(&self.beta)
            .map(|(c, b)| (b + c.norm_squared()).sqrt())
            .sum::<f64>()
            / self.m() as f64;
        Ok(data + self.penalty(w))
    }

    /// `∇Ĵ_c(W) = −(1/m) Σ r_k x_kᵀ / s_k + 2λW` with `s_k = √(β_k + ‖r_k‖²)`;
    /// a sample with `s_k = 0` contributes nothing.
    pub fn grad_j_c(&self, w: &LinearRegressor) -> Result<DMatrix<f64>> {
        self.check(w.matrix())?;
        let mut r = self.residual_buffer();
        self.residuals_t(w.matrix(), &mut r);
        for (mut c, b) in r.column_iter_mut().zip(&self.beta) {
            let s = (b + c.norm_squared()).sqrt();
            if s > 0.0 {
                c /= s;
            } else {
                c.fill(0.0);
            }
        }
        let mut g = w.matrix() * (2.0 * self.lambda);
        g.gemm(-1.0 / self.m() as f64, &r, &self.data.xs, 1.0);
        Ok(g)
    }

    /// `E_{V∼Q(W)} B(V) = B(W) + σ′² · dim_h · (1/m) Σ ‖x_k‖²`.
    pub fn expected_b(&self, w: &LinearRegressor) -> Result<f64> {
        let b = self.control_variate_b(w)?;
        Ok(b + self.variance * self.data.dim_h() as f64 * self.data.mean_sq_norm())
    }

    /// `∇_W E B = −(2/m) Σ r_k x_kᵀ`.
    pub fn grad_expected_b(&self, w: &LinearRegressor) -> Result<DMatrix<f64>> {
        self.check(w.matrix())?;
        let mut r = self.residual_buffer();
        self.residuals_t(w.matrix(), &mut r);
        Ok(&r * &self.data.xs * (-2.0 / self.m() as f64))
    }

    /// Monte Carlo estimate of `Ĵ(W) = E_{V∼Q(W)} L(V) + λ ‖W‖²`.
    ///
    /// Draw `k` uses `stream.at(k)`, so two means evaluated with the same
    /// stream share their noise.
    pub fn objective_j_hat_mc(&self, w: &LinearRegressor, samples: usize, stream: &SeedStream) -> Result<McEstimate> {
        self.check(w.matrix())?;
        if samples == 0 {
            return Err(Error::input("at least one sample is required"));
        }
        let mut buf = self.residual_buffer();
        let penalty = self.penalty(w);
        if self.variance == 0.0 {
            return Ok(McEstimate::exact(self.sample_losses(w.matrix(), &mut buf).0 + penalty));
        }
        let sd = self.variance.sqrt();
        let mut noise = DMatrix::zeros(w.dim_h(), w.dim_f());
        let mut v = noise.clone();
        let values: Vec<f64> = (0..samples)
            .map(|k| {
                GaussianPosterior::fill_noise(&mut stream.at(k as u64).rng(), &mut noise);
                perturb(w.matrix(), sd, &noise, &mut v);
                self.sample_losses(&v, &mut buf).0
            })
            .collect();
        Ok(McEstimate::from_samples(&values).shifted(penalty))
    }

    /// Smoothness constant of `Ĵ_c`:
    /// `λ_max((1/m) Σ x_k x_kᵀ / √β_k) + 2λ`. Infinite when some `β_k = 0`.
    pub fn lipschitz_bound(&self) -> f64 {
        if self.beta.iter().any(|&b| b <= 0.0) {
            return f64::INFINITY;
        }
        let mut scaled = self.data.xs.clone();
        for (mut row, b) in scaled.row_iter_mut().zip(&self.beta) {
            row *= b.powf(-0.25);
        }
        let gram = scaled.transpose() * &scaled / self.m() as f64;
        gram.symmetric_eigenvalues().max() + 2.0 * self.lambda
    }
}
