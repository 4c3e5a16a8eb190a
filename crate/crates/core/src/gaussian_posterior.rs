//! Isotropic Gaussian priors and posteriors over regressor matrices.
//!
//! The prior is `N(0, σ₀² I_N)` with `σ₀² = t σ²` and `σ² = m^{1−2α} / κ²`.
//! Posteriors are `N(W, σ′² I_N)` where `σ′²` comes from a [`Parametrization`].

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::SeedStream;
use crate::surrogate_regression::LinearRegressor;

/// Prior hyperparameters.
///
/// `m` is stored as a float so that asymptotic analyses can use sample sizes
/// beyond the integer range; everything else treats it as a count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub alpha: f64,
    pub t: f64,
    pub kappa: f64,
    pub m: f64,
}

impl PriorConfig {
    pub fn new(alpha: f64, t: f64, kappa: f64, m: f64) -> Result<Self> {
        let p = Self { alpha, t, kappa, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::input(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.t > 0.0 && self.t < 1.0) {
            return Err(Error::input(format!("t must lie in (0, 1), got {}", self.t)));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::input(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.m.is_finite() && self.m >= 1.0) {
            return Err(Error::input(format!("m must be at least 1, got {}", self.m)));
        }
        Ok(())
    }

    /// Human-readable warnings for legal but questionable settings.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.alpha > 0.5 && self.alpha < 1.0 {
            out.push(format!(
                "alpha = {} lies in (1/2, 1): the prior variance shrinks with m and the penalty degrades in the large-data limit",
                self.alpha
            ));
        }
        out
    }

    /// `σ² = m^{1−2α} / κ²`.
    pub fn sigma_sq(&self) -> f64 {
        self.m.powf(1.0 - 2.0 * self.alpha) / (self.kappa * self.kappa)
    }

    /// `σ₀² = t σ²`.
    pub fn sigma0_sq(&self) -> f64 {
        self.t * self.sigma_sq()
    }

    /// Penalty weight `λ_m^α(t) = 1 / (2 σ₀² m^α)`.
    pub fn lambda(&self) -> f64 {
        1.0 / (2.0 * self.sigma0_sq() * self.m.powf(self.alpha))
    }

    /// `F(t) = (1 − t) / t`.
    pub fn f_t(&self) -> f64 {
        (1.0 - self.t) / self.t
    }
}

/// Which posterior variance `σ′²` to use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "variance", rename_all = "kebab-case")]
pub enum Parametrization {
    /// `σ′² = 1`.
    Unit,
    /// `σ′² = σ²`, the `t → 1` limit of the prior variance.
    Wide,
    Custom(f64),
}

impl Parametrization {
    pub fn variance(&self, prior: &PriorConfig) -> f64 {
        match *self {
            Parametrization::Unit => 1.0,
            Parametrization::Wide => prior.sigma_sq(),
            Parametrization::Custom(v) => v,
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Parametrization::Unit => "unit".into(),
            Parametrization::Wide => "wide".into(),
            Parametrization::Custom(v) => format!("custom:{v:?}"),
        }
    }
}

impl std::str::FromStr for Parametrization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Parametrization::Unit),
            "wide" => Ok(Parametrization::Wide),
            _ => match s.strip_prefix("custom:") {
                Some(v) => {
                    let v: f64 = v
                        .parse()
                        .map_err(|_| Error::input(format!("bad custom variance `{v}`")))?;
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::input(format!("custom variance must be nonnegative, got {v}")));
                    }
                    Ok(Parametrization::Custom(v))
                }
                None => Err(Error::input(format!(
                    "unknown parametrization `{s}` (expected unit, wide or custom:<variance>)"
                ))),
            },
        }
    }
}

/// `N(mean, variance · I_N)` over `dim_h × dim_f` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mean: LinearRegressor,
    /// Per-entry variance. Zero gives a point mass, which is only meant for tests.
    pub variance: f64,
    pub parametrization: Parametrization,
}

impl GaussianPosterior {
    pub fn new(mean: LinearRegressor, variance: f64, parametrization: Parametrization) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::input(format!("posterior variance must be nonnegative, got {variance}")));
        }
        Ok(Self {
            mean,
            variance,
            parametrization,
        })
    }

    pub fn from_prior(mean: LinearRegressor, prior: &PriorConfig, parametrization: Parametrization) -> Result<Self> {
        Self::new(mean, parametrization.variance(prior), parametrization)
    }

    pub fn n_params(&self) -> usize {
        self.mean.n_params()
    }

    pub fn with_mean(&self, mean: LinearRegressor) -> Self {
        Self {
            mean,
            variance: self.variance,
            parametrization: self.parametrization,
        }
    }

    /// Fills `noise` with i.i.d. standard normals in column-major order.
    pub(crate) fn fill_noise<R: Rng>(rng: &mut R, noise: &mut DMatrix<f64>) {
        for v in noise.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    /// One draw `V = W + √σ′² ε`, reproducible from `stream`.
    pub fn sample_regressor(&self, stream: &SeedStream) -> LinearRegressor {
        if self.variance == 0.0 {
            return self.mean.clone();
        }
        let mut rng = stream.rng();
        let mut noise = DMatrix::zeros(self.mean.dim_h(), self.mean.dim_f());
        Self::fill_noise(&mut rng, &mut noise);
        LinearRegressor::from_matrix_unchecked(self.mean.matrix() + noise * self.variance.sqrt())
    }

    /// `log N(v; W, σ′² I)`.
    pub fn log_density(&self, v: &LinearRegressor) -> Result<f64> {
        self.check_shape(v)?;
        if !(self.variance > 0.0) {
            return Err(Error::input("log density of a degenerate posterior"));
        }
        let n = self.n_params() as f64;
        let d2 = (v.matrix() - self.mean.matrix()).norm_squared();
        Ok(-0.5 * n * (2.0 * std::f64::consts::PI * self.variance).ln() - d2 / (2.0 * self.variance))
    }

    /// `∇_W log N(v; W, σ′² I) = (v − W) / σ′²`.
    pub fn log_density_gradient(&self, v: &LinearRegressor) -> Result<DMatrix<f64>> {
        self.check_shape(v)?;
        if !(self.variance > 0.0) {
            return Err(Error::input("score of a degenerate posterior"));
        }
        Ok((v.matrix() - self.mean.matrix()) / self.variance)
    }

    fn check_shape(&self, v: &LinearRegressor) -> Result<()> {
        if v.dim_h() != self.mean.dim_h() {
            return Err(Error::dim("sample rows", self.mean.dim_h(), v.dim_h()));
        }
        if v.dim_f() != self.mean.dim_f() {
            return Err(Error::dim("sample columns", self.mean.dim_f(), v.dim_f()));
        }
        Ok(())
    }
}

/// `KL(N(μ, σ₁² I_N) ‖ N(0, σ₂² I_N))` from its sufficient statistics.
pub fn kl_isotropic_parts(n: usize, mean_norm_sq: f64, var_q: f64, var_p: f64) -> Result<f64> {
    if !(var_q > 0.0 && var_p > 0.0 && var_q.is_finite() && var_p.is_finite()) {
        return Err(Error::input(format!(
            "KL needs positive variances, got posterior {var_q} and prior {var_p}"
        )));
    }
    if !(mean_norm_sq >= 0.0) {
        return Err(Error::input("squared mean norm must be nonnegative"));
    }
    let n = n as f64;
    // N (r − 1 − ln r) with r = σ₁²/σ₂², written to stay nonnegative near r = 1
    let u = var_q / var_p - 1.0;
    let shape = n * (u - u.ln_1p());
    Ok(0.5 * (shape.max(0.0) + mean_norm_sq / var_p))
}

/// KL divergence between a posterior and the zero-mean prior `N(0, σ₀² I)`.
pub fn kl_isotropic(q: &GaussianPosterior, prior: &PriorConfig) -> Result<f64> {
    prior.validate()?;
    kl_isotropic_parts(q.n_params(), q.mean.frobenius_norm_sq(), q.variance, prior.sigma0_sq())
}

/// `K_U(t)`: the KL with unit posterior variance.
pub fn kl_unit_parametrization(prior: &PriorConfig, mean_norm_sq: f64, n: usize) -> Result<f64> {
    prior.validate()?;
    if !(mean_norm_sq >= 0.0) {
        return Err(Error::input("squared mean norm must be nonnegative"));
    }
    let (t, s2, n) = (prior.t, prior.sigma_sq(), n as f64);
    Ok(mean_norm_sq / (2.0 * t * s2) + 0.5 * n * (t.ln() + s2.ln() - 1.0 + 1.0 / (t * s2)))
}

/// `K_W(t)`: the KL with posterior variance `σ²`.
pub fn kl_wide_parametrization(prior: &PriorConfig, mean_norm_sq: f64, n: usize) -> Result<f64> {
    prior.validate()?;
    if !(mean_norm_sq >= 0.0) {
        return Err(Error::input("squared mean norm must be nonnegative"));
    }
    let (t, s2, n) = (prior.t, prior.sigma_sq(), n as f64);
    Ok(mean_norm_sq / (2.0 * t * s2) + 0.5 * n * (t.ln() - 1.0 + 1.0 / t))
}

/// `K_U(t) − K_W(t) = (N/2)(ln σ² + 1/(tσ²) − 1/t)`.
pub fn parametrization_gap(sigma_sq: f64, t: f64, n: usize) -> Result<f64> {
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(Error::input(format!("sigma^2 must be positive, got {sigma_sq}")));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::input(format!("t must lie in (0, 1), got {t}")));
    }
    Ok(0.5 * n as f64 * (sigma_sq.ln() + 1.0 / (t * sigma_sq) - 1.0 / t))
}

/// `t₀(σ) = (1 − 1/σ²) / ln σ²`.
///
/// For `σ² > 1` the wide parametrization has the smaller KL exactly when
/// `t > t₀`; for `σ² < 1` we have `t₀ > 1`, so it is smaller for every `t`.
pub fn parametrization_threshold(sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(Error::input(format!("sigma^2 must be positive, got {sigma_sq}")));
    }
    if sigma_sq == 1.0 {
        return Err(Error::input("the threshold is undefined at sigma^2 = 1 (its limit is 1)"));
    }
    Ok((1.0 - 1.0 / sigma_sq) / sigma_sq.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prior(alpha: f64, t: f64, kappa: f64, m: f64) -> PriorConfig {
        PriorConfig::new(alpha, t, kappa, m).unwrap()
    }

    #[test]
    fn prior_variance_rule() {
        let p = prior(0.3, 0.4, 2.0, 100.0);
        assert!((p.sigma0_sq() - 0.4 * 100f64.powf(0.4) / 4.0).abs() < 1e-12);
        for m in [1.0, 10.0, 1e3, 1e6] {
            assert!((prior(0.5, 0.25, 2.0, m).sigma0_sq() - 0.25 / 4.0).abs() < 1e-15);
        }
        assert!(PriorConfig::new(0.5, 1.0, 1.0, 10.0).is_err());
        assert!(PriorConfig::new(0.0, 0.5, 1.0, 10.0).is_err());
        assert!(PriorConfig::new(0.5, 0.5, 0.0, 10.0).is_err());
        assert!(prior(0.7, 0.5, 1.0, 10.0).warnings().len() == 1);
        assert!(prior(0.5, 0.5, 1.0, 10.0).warnings().is_empty());
    }

    #[test]
    fn lambda_matches_closed_form() {
        let p = prior(0.4, 0.3, 1.5, 500.0);
        let direct = 1.5 * 1.5 / (2.0 * 0.3 * 500f64.powf(0.2) * 500f64.powf(0.4));
        assert!((p.lambda() - direct).abs() < 1e-15 * direct.max(1.0));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_isotropic_parts(3, 0.0, 0.7, 0.7).unwrap(), 0.0);
        assert!((kl_isotropic_parts(2, 2.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(kl_isotropic_parts(2, 0.0, 0.0, 1.0).is_err());
        assert!(kl_isotropic_parts(2, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn kl_threshold_examples() {
        let e = std::f64::consts::E;
        assert!((parametrization_threshold(e).unwrap() - (1.0 - 1.0 / e)).abs() < 1e-15);
        for s in [1.0 - 1e-6, 1.0 + 1e-6] {
            assert!((parametrization_threshold(s).unwrap() - 1.0).abs() < 1e-4);
        }
        assert!(parametrization_threshold(1.0).is_err());
    }

    #[test]
    fn wide_kl_vanishes_at_t_one() {
        let p = prior(0.5, 1.0 - 1e-9, 1.0, 50.0);
        assert!(kl_wide_parametrization(&p, 0.0, 10).unwrap().abs() < 1e-12);
    }

    #[test]
    fn unit_kl_vanishes_when_prior_is_unit() {
        // α = ½, κ² = t gives t σ² = 1
        let p = prior(0.5, 0.36, 0.6, 77.0);
        assert!(kl_unit_parametrization(&p, 0.0, 12).unwrap().abs() < 1e-12);
    }

    #[test]
    fn sampling_is_reproducible_and_point_mass_copies() {
        let mean = LinearRegressor::new(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.5, 2.0])).unwrap();
        let q = GaussianPosterior::new(mean.clone(), 0.3, Parametrization::Custom(0.3)).unwrap();
        let s = SeedStream::new(4).derive("sample");
        assert_eq!(q.sample_regressor(&s), q.sample_regressor(&s));
        assert_ne!(q.sample_regressor(&s), q.sample_regressor(&s.at(1)));
        let point = GaussianPosterior::new(mean.clone(), 0.0, Parametrization::Custom(0.0)).unwrap();
        assert_eq!(point.sample_regressor(&s), mean);
    }

    #[test]
    fn score_examples() {
        let mean = LinearRegressor::zeros(2, 2);
        let q = GaussianPosterior::new(mean.clone(), 1.0, Parametrization::Unit).unwrap();
        assert_eq!(q.log_density_gradient(&mean).unwrap(), DMatrix::zeros(2, 2));
        let mut e11 = DMatrix::zeros(2, 2);
        e11[(0, 0)] = 1.0;
        let v = LinearRegressor::new(e11.clone()).unwrap();
        assert_eq!(q.log_density_gradient(&v).unwrap(), e11);
        assert!(q.log_density_gradient(&LinearRegressor::zeros(3, 2)).is_err());
    }

    #[test]
    fn noise_is_standard_normal_ish() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut noise = DMatrix::zeros(50, 50);
        GaussianPosterior::fill_noise(&mut rng, &mut noise);
        let mean = noise.sum() / 2500.0;
        let var = noise.norm_squared() / 2500.0 - mean * mean;
        assert!(mean.abs() < 0.08 && (var - 1.0).abs() < 0.1);
    }

    #[test]
    fn parse_parametrization() {
        assert_eq!("wide".parse::<Parametrization>().unwrap(), Parametrization::Wide);
        assert_eq!("custom:0.5".parse::<Parametrization>().unwrap(), Parametrization::Custom(0.5));
        assert!("custom:-1".parse::<Parametrization>().is_err());
        assert!("narrow".parse::<Parametrization>().is_err());
    }
}
