//! Score-function gradient estimation and the quadratic control variate.
//!
//! With `V = W + σ′ ε`, the score is `∇_W log Q(V|W) = (V − W)/σ′² = ε/σ′`,
//! so the naive estimator of `∇_W E L(V)` is `(1/M) Σ L(V_k) ε_k / σ′`.
//! The control-variate estimator replaces `L` by `L − âB` and adds back the
//! exact gradient `â ∇E B`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_posterior::GaussianPosterior;
use crate::seed::SeedStream;
use crate::surrogate_regression::LinearRegressor;

use super::objectives::{perturb, Problem};

/// How the baseline coefficient is chosen at each step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum AHat {
    /// Plug-in estimate from `M′` independent samples.
    Estimate,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlVariateConfig {
    /// `M`, samples per gradient estimate.
    pub m_samples: usize,
    /// `M′`, samples for estimating `â`; drawn from a stream independent of the `M` samples.
    pub m_prime_samples: usize,
    pub use_cv: bool,
    pub a_hat: AHat,
}

impl ControlVariateConfig {
    /// `M′ = max(5, M/4)`.
    pub fn with_m(m_samples: usize) -> Self {
        Self {
            m_samples,
            m_prime_samples: (m_samples / 4).max(5),
            use_cv: true,
            a_hat: AHat::Estimate,
        }
    }

    /// Plain score-function estimator (no control variate).
    pub fn naive(m_samples: usize) -> Self {
        Self {
            use_cv: false,
            a_hat: AHat::Fixed(0.0),
            ..Self::with_m(m_samples)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_samples == 0 {
            return Err(Error::input("M must be at least 1"));
        }
        if self.use_cv && self.a_hat == AHat::Estimate && self.m_prime_samples < 2 {
            return Err(Error::input("estimating a-hat needs M' >= 2"));
        }
        Ok(())
    }
}

impl Default for ControlVariateConfig {
    fn default() -> Self {
        Self::with_m(20)
    }
}

/// A score-function gradient estimate.
#[derive(Clone, Debug)]
pub struct SfeEstimate {
    pub gradient: DMatrix<f64>,
    /// Per-entry variance of the estimate (sample variance of the per-draw
    /// terms divided by `M`); zero for `M = 1`.
    pub entry_variance: DMatrix<f64>,
    /// Mean of the sampled losses, an estimate of `E L(V)`.
    pub mean_loss: f64,
}

/// Draws `ε_k` for `k < count` from `stream.at(k)` and calls `f(k, ε_k, V_k)`.
pub(crate) fn for_each_sample(
    q: &GaussianPosterior,
    count: usize,
    stream: &SeedStream,
    mut f: impl FnMut(usize, &DMatrix<f64>, &DMatrix<f64>),
) {
    let sd = q.variance.sqrt();
    let w = q.mean.matrix();
    let mut eps = DMatrix::zeros(w.nrows(), w.ncols());
    let mut v = eps.clone();
    for k in 0..count {
        GaussianPosterior::fill_noise(&mut stream.at(k as u64).rng(), &mut eps);
        perturb(w, sd, &eps, &mut v);
        f(k, &eps, &v);
    }
}

/// `(1/M) Σ weight(V_k) (V_k − W) / σ′²` and its per-entry variance.
fn weighted_score_mean(
    q: &GaussianPosterior,
    samples: usize,
    stream: &SeedStream,
    mut weight: impl FnMut(&DMatrix<f64>) -> (f64, f64),
) -> SfeEstimate {
    let w = q.mean.matrix();
    let (h, d) = (w.nrows(), w.ncols());
    let inv_sd = 1.0 / q.variance.sqrt();
    let mut sum = DMatrix::zeros(h, d);
    let mut sum_sq = DMatrix::zeros(h, d);
    let mut loss_sum = 0.0;
    for_each_sample(q, samples, stream, |_, eps, v| {
        let (c, loss) = weight(v);
        loss_sum += loss;
        let scale = c * inv_sd;
        for ((s, s2), e) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(eps.iter()) {
            let term = scale * e;
            *s += term;
            *s2 += term * term;
        }
    });
    let n = samples as f64;
    let gradient = &sum / n;
    let entry_variance = if samples > 1 {
        sum_sq.zip_map(&sum, |s2: f64, s: f64| ((s2 - s * s / n) / (n - 1.0)).max(0.0) / n)
    } else {
        DMatrix::zeros(h, d)
    };
    SfeEstimate {
        gradient,
        entry_variance,
        mean_loss: loss_sum / n,
    }
}

/// Score-function estimate of `∇_W E_{V∼Q(W)} L(V)` for an arbitrary loss.
pub fn score_function_gradient_with(
    q: &GaussianPosterior,
    samples: usize,
    stream: &SeedStream,
    mut loss: impl FnMut(&DMatrix<f64>) -> f64,
) -> Result<SfeEstimate> {
    if samples == 0 {
        return Err(Error::input("at least one sample is required"));
    }
    if !(q.variance > 0.0) {
        return Err(Error::input("the score-function estimator needs a positive posterior variance"));
    }
    Ok(weighted_score_mean(q, samples, stream, |v| {
        let l = loss(v);
        (l, l)
    }))
}

/// Score-function estimate `η_M` of the gradient of the data term of `Ĵ`.
/// The penalty gradient is not included.
pub fn score_function_gradient(
    problem: &Problem,
    w: &LinearRegressor,
    samples: usize,
    stream: &SeedStream,
) -> Result<SfeEstimate> {
    problem.check(w.matrix())?;
    let q = problem.posterior(w);
    let mut buf = problem.residual_buffer();
    score_function_gradient_with(&q, samples, stream, |v| problem.sample_losses(v, &mut buf).0)
}

/// Result of [`estimate_a_hat_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AHatEstimate {
    pub value: f64,
    /// Set when the denominator vanished and the control variate was disabled.
    pub degenerate: bool,
}

/// `â = Σ_j Cov(L s_j, B s_j) / Σ_j Var(B s_j)` over `M′` draws, where `s` is
/// the score `(V − W)/σ′²`.
pub fn estimate_a_hat_with(
    q: &GaussianPosterior,
    samples: usize,
    stream: &SeedStream,
    mut losses: impl FnMut(&DMatrix<f64>) -> (f64, f64),
) -> Result<AHatEstimate> {
    if samples < 2 {
        return Err(Error::input("estimating a-hat needs at least two samples"));
    }
    if !(q.variance > 0.0) {
        return Ok(AHatEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let w = q.mean.matrix();
    let inv_sd = 1.0 / q.variance.sqrt();
    let n = w.len();
    let mut lt = vec![0.0; samples * n];
    let mut bt = vec![0.0; samples * n];
    for_each_sample(q, samples, stream, |k, eps, v| {
        let (l, b) = losses(v);
        for (j, e) in eps.iter().enumerate() {
            let s = e * inv_sd;
            lt[k * n + j] = l * s;
            bt[k * n + j] = b * s;
        }
    });
    let mut cov = 0.0;
    let mut var = 0.0;
    for j in 0..n {
        let (mut ml, mut mb) = (0.0, 0.0);
        for k in 0..samples {
            ml += lt[k * n + j];
            mb += bt[k * n + j];
        }
        ml /= samples as f64;
        mb /= samples as f64;
        for k in 0..samples {
            let db = bt[k * n + j] - mb;
            cov += (lt[k * n + j] - ml) * db;
            var += db * db;
        }
    }
    if !(var > 0.0) || !var.is_finite() {
        return Ok(AHatEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(AHatEstimate {
        value: cov / var,
        degenerate: false,
    })
}

/// [`estimate_a_hat_with`] for the problem's own `L` and `B`.
pub fn estimate_a_hat(problem: &Problem, w: &LinearRegressor, samples: usize, stream: &SeedStream) -> Result<AHatEstimate> {
    problem.check(w.matrix())?;
    let q = problem.posterior(w);
    let mut buf = problem.residual_buffer();
    estimate_a_hat_with(&q, samples, stream, |v| problem.sample_losses(v, &mut buf))
}

/// One stochastic gradient of `Ĵ` with optional control variate.
#[derive(Clone, Debug)]
pub struct StochasticGradient {
    pub gradient: DMatrix<f64>,
    pub a_hat: f64,
    pub a_hat_degenerate: bool,
    /// MC estimate of `Ĵ(W)` from the gradient samples.
    pub objective_estimate: f64,
}

/// Hooks replacing `L` and `B` (both return `(L(V), B(V))`).
pub type LossHook<'h> = &'h dyn Fn(&DMatrix<f64>) -> (f64, f64);

/// `η̂_M(L − âB) + â η_B + η_P`.
///
/// The `M` gradient samples come from `grad_stream`; `â` (when estimated)
/// from `a_hat_stream`. With `â = 0` no `B` value is computed and the result
/// equals the naive score-function step. At zero posterior variance the score
/// term is taken to be 0.
pub fn stochastic_gradient(
    problem: &Problem,
    w: &LinearRegressor,
    cv: &ControlVariateConfig,
    grad_stream: &SeedStream,
    a_hat_stream: &SeedStream,
    hook: Option<LossHook>,
) -> Result<StochasticGradient> {
    cv.validate()?;
    problem.check(w.matrix())?;
    let q = problem.posterior(w);
    let mut buf = problem.residual_buffer();
    let mut losses = |v: &DMatrix<f64>| match hook {
        Some(f) => f(v),
        None => problem.sample_losses(v, &mut buf),
    };
    let (a_hat, degenerate) = if !cv.use_cv {
        (0.0, false)
    } else {
        match cv.a_hat {
            AHat::Fixed(a) => (a, false),
            AHat::Estimate => {
                let e = estimate_a_hat_with(&q, cv.m_prime_samples, a_hat_stream, &mut losses)?;
                (e.value, e.degenerate)
            }
        }
    };
    let penalty_grad = w.matrix() * (2.0 * problem.lambda());
    let penalty = problem.penalty(w);
    if q.variance == 0.0 {
        let (l, _) = losses(w.matrix());
        let mut g = penalty_grad;
        if a_hat != 0.0 {
            g += problem.grad_expected_b(w)? * a_hat;
        }
        return Ok(StochasticGradient {
            gradient: g,
            a_hat,
            a_hat_degenerate: degenerate,
            objective_estimate: l + penalty,
        });
    }
    let est = if a_hat == 0.0 {
        weighted_score_mean(&q, cv.m_samples, grad_stream, |v| {
            let (l, _) = losses(v);
            (l, l)
        })
    } else {
        weighted_score_mean(&q, cv.m_samples, grad_stream, |v| {
            let (l, b) = losses(v);
            (l - a_hat * b, l)
        })
    };
    let mut g = est.gradient;
    if a_hat != 0.0 {
        g += problem.grad_expected_b(w)? * a_hat;
    }
    g += penalty_grad;
    Ok(StochasticGradient {
        gradient: g,
        a_hat,
        a_hat_degenerate: degenerate,
        objective_estimate: est.mean_loss + penalty,
    })
}
