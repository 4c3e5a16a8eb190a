//! PAC-Bayes bound values and their decomposition into auditable parts.
//!
//! Every bound is returned as a [`BoundCertificate`] whose `total` can be
//! recomputed from the stored parts with [`BoundCertificate::recompute_total`].
//!
//! * Classification: `(ae/(e−1)) (1 − exp(−R/a − (KL + ln(1/δ))/m))`, where
//!   `R` is the posterior-averaged empirical task risk and `a > 1`.
//! * Augmented excess risk: `2 c_Δ [R_abs + (KL + ln(2/δ))/m^α + ε]`.
//! * KDE: `(5e/(e−1)) [1 − exp(−2 R_m − ((9/8)‖w‖² + ln(1/δ))/m)]` for
//!   kernels with `k(x, x) = 1`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_posterior::{kl_isotropic, GaussianPosterior, PriorConfig};
use crate::kernel_features::Kernel;
use crate::loss_embedding::LossEmbedding;
use crate::seed::SeedStream;
use crate::stats::McEstimate;
use crate::surrogate_regression::{
    empirical_task_risk, mean_row_norm, model_quadratic_risk, LinearRegressor, RegressionData, SurrogateModel,
};

const E: f64 = std::f64::consts::E;

/// Smallest parameter count for which the augmented excess bound is proven.
pub const MIN_PARAMS_FOR_PENALTY: usize = 6;

pub const FLAG_SURROGATE: &str = "surrogate-empirical-term";
pub const FLAG_PLUG_IN: &str = "plug-in-g-star-non-certified";
pub const FLAG_FEW_PARAMS: &str = "n-params-below-6-non-certified";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Classification,
    AugmentedExcess,
    Kde,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Classification => "classification",
            BoundKind::AugmentedExcess => "augmented-excess",
            BoundKind::Kde => "kde",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(BoundKind::Classification),
            "augmented-excess" => Ok(BoundKind::AugmentedExcess),
            "kde" => Ok(BoundKind::Kde),
            other => Err(Error::Format {
                what: "certificate",
                message: format!("unknown bound kind `{other}`"),
            }),
        }
    }
}

/// Parameters that produced a certificate. Unused entries are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CertificateParams {
    pub delta: f64,
    pub a: Option<f64>,
    pub alpha: Option<f64>,
    pub t: Option<f64>,
    pub m: f64,
    pub n_params: Option<usize>,
    pub kappa: Option<f64>,
    pub c_delta: Option<f64>,
    pub g_star_norm: Option<f64>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub parametrization: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub kind: BoundKind,
    pub empirical_term: f64,
    /// KL divergence (or `(9/8)‖w‖²` for the KDE bound).
    pub kl_term: f64,
    /// `ε` for the augmented bound, 0 otherwise.
    pub penalty_term: f64,
    /// `ln(1/δ)`, or `ln(2/δ)` for the augmented bound.
    pub confidence_term: f64,
    pub total: f64,
    pub params: CertificateParams,
    pub flags: Vec<String>,
}

/// Column order of [`BoundCertificate::to_csv_row`].
pub const CSV_FIELDS: [&str; 19] = [
    "kind",
    "total",
    "empirical_term",
    "kl_term",
    "penalty_term",
    "confidence_term",
    "delta",
    "a",
    "alpha",
    "t",
    "m",
    "n_params",
    "kappa",
    "c_delta",
    "g_star_norm",
    "mc_samples",
    "seed",
    "parametrization",
    "flags",
];

fn fmt_opt<T: std::fmt::Debug>(v: &Option<T>) -> String {
    v.as_ref().map(|x| format!("{x:?}")).unwrap_or_default()
}

fn parse_field<T: std::str::FromStr>(name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format {
        what: "certificate",
        message: format!("bad value `{s}` for {name}"),
    })
}

fn parse_opt<T: std::str::FromStr>(name: &str, s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(name, s).map(Some)
    }
}

impl BoundCertificate {
    /// The total implied by the stored parts.
    pub fn recompute_total(&self) -> f64 {
        let m = self.params.m;
        match self.kind {
            BoundKind::Classification => {
                let a = self.params.a.unwrap_or(f64::NAN);
                let x = self.empirical_term / a + (self.kl_term + self.confidence_term) / m;
                a * E / (E - 1.0) * -(-x).exp_m1()
            }
            BoundKind::AugmentedExcess => {
                let c = self.params.c_delta.unwrap_or(f64::NAN);
                let alpha = self.params.alpha.unwrap_or(f64::NAN);
                2.0 * c
                    * (self.empirical_term
                        + (self.kl_term + self.confidence_term) / m.powf(alpha)
                        + self.penalty_term)
            }
            BoundKind::Kde => {
                let x = 2.0 * self.empirical_term + (self.kl_term + self.confidence_term) / m;
                5.0 * E / (E - 1.0) * -(-x).exp_m1()
            }
        }
    }

    /// Whether the certificate carries no caveat flags.
    pub fn is_certified(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn csv_header() -> String {
        CSV_FIELDS.join(",")
    }

    /// One CSV row in [`CSV_FIELDS`] order. Flags are `|`-separated.
    pub fn to_csv_row(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{},{:?},{},{},{},{},{},{},{},{}",
            self.kind.name(),
            self.total,
            self.empirical_term,
            self.kl_term,
            self.penalty_term,
            self.confidence_term,
            p.delta,
            fmt_opt(&p.a),
            fmt_opt(&p.alpha),
            fmt_opt(&p.t),
            p.m,
            fmt_opt(&p.n_params),
            fmt_opt(&p.kappa),
            fmt_opt(&p.c_delta),
            fmt_opt(&p.g_star_norm),
            fmt_opt(&p.mc_samples),
            fmt_opt(&p.seed),
            p.parametrization.clone().unwrap_or_default(),
            self.flags.join("|"),
        );
        s
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let f: Vec<&str> = row.trim_end().split(',').collect();
        if f.len() != CSV_FIELDS.len() {
            return Err(Error::Format {
                what: "certificate",
                message: format!("expected {} fields, got {}", CSV_FIELDS.len(), f.len()),
            });
        }
        Ok(Self {
            kind: BoundKind::parse(f[0])?,
            total: parse_field("total", f[1])?,
            empirical_term: parse_field("empirical_term", f[2])?,
            kl_term: parse_field("kl_term", f[3])?,
            penalty_term: parse_field("penalty_term", f[4])?,
            confidence_term: parse_field("confidence_term", f[5])?,
            params: CertificateParams {
                delta: parse_field("delta", f[6])?,
                a: parse_opt("a", f[7])?,
                alpha: parse_opt("alpha", f[8])?,
                t: parse_opt("t", f[9])?,
                m: parse_field("m", f[10])?,
                n_params: parse_opt("n_params", f[11])?,
                kappa: parse_opt("kappa", f[12])?,
                c_delta: parse_opt("c_delta", f[13])?,
                g_star_norm: parse_opt("g_star_norm", f[14])?,
                mc_samples: parse_opt("mc_samples", f[15])?,
                seed: parse_opt("seed", f[16])?,
                parametrization: (!f[17].is_empty()).then(|| f[17].to_string()),
            },
            flags: if f[18].is_empty() {
                Vec::new()
            } else {
                f[18].split('|').map(str::to_string).collect()
            },
        })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn check_slack(a: f64) -> Result<()> {
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::input(format!("slack a must exceed 1, got {a}")));
    }
    Ok(())
}

fn check_m(m: f64) -> Result<()> {
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::input(format!("m must be at least 1, got {m}")));
    }
    Ok(())
}

/// `(ae/(e−1))(1 − e^{−x/a})`, an upper bound on `x` over `[0, 1]`.
pub fn exp_identity_bound(x: f64, a: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::input(format!("x must lie in [0, 1], got {x}")));
    }
    check_slack(a)?;
    Ok(a * E / (E - 1.0) * -(-x / a).exp_m1())
}

/// Classification bound on the expected task risk of the stochastic predictor.
pub fn classification_bound(empirical_risk: f64, kl: f64, m: f64, delta: f64, a: f64) -> Result<BoundCertificate> {
    check_delta(delta)?;
    check_slack(a)?;
    check_m(m)?;
    if !(0.0..=1.0).contains(&empirical_risk) {
        return Err(Error::input(format!(
            "empirical task risk must lie in [0, 1], got {empirical_risk}"
        )));
    }
    if !(kl >= 0.0 && kl.is_finite()) {
        return Err(Error::input(format!("KL must be finite and nonnegative, got {kl}")));
    }
    let mut c = BoundCertificate {
        kind: BoundKind::Classification,
        empirical_term: empirical_risk,
        kl_term: kl,
        penalty_term: 0.0,
        confidence_term: (1.0 / delta).ln(),
        total: 0.0,
        params: CertificateParams {
            delta,
            a: Some(a),
            m,
            ..Default::default()
        },
        flags: Vec::new(),
    };
    c.total = c.recompute_total();
    Ok(c)
}

/// Monte Carlo estimate of `E_{f∼Q} E_m(f)`: each sampled regressor is decoded
/// and scored on its own.
pub fn estimate_expected_empirical_task_risk(
    q: &GaussianPosterior,
    embedding: &LossEmbedding,
    data: &RegressionData,
    samples: usize,
    stream: &SeedStream,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::input("at least one posterior sample is required"));
    }
    if q.variance == 0.0 {
        return Ok(McEstimate::exact(empirical_task_risk(&q.mean, embedding, data)?));
    }
    let risks = (0..samples)
        .map(|k| empirical_task_risk(&q.sample_regressor(&stream.at(k as u64)), embedding, data))
        .collect::<Result<Vec<_>>>()?;
    Ok(McEstimate::from_samples(&risks))
}

/// Monte Carlo estimate of `E_{V∼Q} (1/m) Σ ‖tᵢ − V xᵢ‖` with targets `tᵢ`
/// in the rows of `targets`. Draw `k` uses `stream.at(k)`.
pub fn estimate_mean_abs_deviation(
    q: &GaussianPosterior,
    xs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    samples: usize,
    stream: &SeedStream,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::input("at least one posterior sample is required"));
    }
    if xs.nrows() != targets.nrows() || xs.nrows() == 0 {
        return Err(Error::dim("target rows", xs.nrows(), targets.nrows()));
    }
    if targets.ncols() != q.mean.dim_h() || xs.ncols() != q.mean.dim_f() {
        return Err(Error::dim("posterior shape", targets.ncols() * xs.ncols(), q.n_params()));
    }
    let eval = |v: &LinearRegressor| {
        let mut r = targets.clone();
        r.gemm(-1.0, xs, &v.matrix().transpose(), 1.0);
        mean_row_norm(&r)
    };
    if q.variance == 0.0 {
        return Ok(McEstimate::exact(eval(&q.mean)));
    }
    let draws: Vec<f64> = (0..samples)
        .map(|k| eval(&q.sample_regressor(&stream.at(k as u64))))
        .collect();
    Ok(McEstimate::from_samples(&draws))
}

/// Upper surrogate of `E_Q (1/m) Σ ‖g*(xᵢ) − g(xᵢ)‖` that needs no `g*`:
/// `g*(x)` lies in the convex hull of the `φ(y)`, so
/// `‖g*(xᵢ) − g(xᵢ)‖ ≤ ‖φ(yᵢ) − g(xᵢ)‖ + diam φ`.
pub fn surrogate_abs_term(
    q: &GaussianPosterior,
    embedding: &LossEmbedding,
    data: &RegressionData,
    samples: usize,
    stream: &SeedStream,
) -> Result<McEstimate> {
    let est = estimate_mean_abs_deviation(q, &data.xs, &data.targets, samples, stream)?;
    Ok(est.shifted(embedding.phi_diameter()))
}

fn check_penalty_inputs(prior: &PriorConfig, g_star_norm: f64) -> Result<()> {
    prior.validate()?;
    if !(g_star_norm >= 0.0 && g_star_norm.is_finite()) {
        return Err(Error::input(format!("||g*|| must be finite and nonnegative, got {g_star_norm}")));
    }
    Ok(())
}

/// The additive penalty `ε(m, t, α, P)` of the augmented excess bound.
///
/// The bound is only proven for `N ≥ 6`; callers building certificates flag
/// smaller `N`.
pub fn penalty_epsilon(prior: &PriorConfig, g_star_norm: f64, n: usize) -> Result<f64> {
    check_penalty_inputs(prior, g_star_norm)?;
    let (m, a, t) = (prior.m, prior.alpha, prior.t);
    let f = prior.f_t();
    let g2 = g_star_norm * g_star_norm;
    let quad = g2 / (2.0 * m.powf(1.0 - a)) * (1.0 + 1.0 / f);
    let log_part = (g_star_norm / (2.0 * f * m.powf(1.0 - 2.0 * a)).sqrt()).ln_1p() - 0.5 * (-t).ln_1p();
    Ok(quad + n as f64 / m.powf(a) * log_part)
}

/// `ε′` split into the part proportional to `N` and the part free of `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonPrimeParts {
    pub n_linear: f64,
    pub n_free: f64,
}

impl EpsilonPrimeParts {
    pub fn total(&self) -> f64 {
        self.n_linear + self.n_free
    }
}

/// The regrouped penalty `ε′`: the unit-variance KL at mean `g*`, scaled by
/// `1/m^α`, plus `ε`.
pub fn penalty_epsilon_prime_parts(prior: &PriorConfig, g_star_norm: f64, n: usize) -> Result<EpsilonPrimeParts> {
    check_penalty_inputs(prior, g_star_norm)?;
    let (m, a, t, k2) = (prior.m, prior.alpha, prior.t, prior.kappa * prior.kappa);
    let f = prior.f_t();
    let g2 = g_star_norm * g_star_norm;
    let n = n as f64;
    let bracket = (g_star_norm / (2.0 * f * m.powf(1.0 - 2.0 * a)).sqrt()).ln_1p()
        + 0.5 * (1.0 / f).ln()
        + 0.5 * (m.powf(1.0 - 2.0 * a) / k2).ln()
        - 0.5;
    let denom = 2.0 * m.powf(1.0 - a);
    Ok(EpsilonPrimeParts {
        n_linear: n / m.powf(a) * bracket + n * k2 / (t * denom),
        n_free: (k2 / t * g2 + g2 * (1.0 + 1.0 / f)) / denom,
    })
}

pub fn penalty_epsilon_prime(prior: &PriorConfig, g_star_norm: f64, n: usize) -> Result<f64> {
    Ok(penalty_epsilon_prime_parts(prior, g_star_norm, n)?.total())
}

/// How the empirical absolute term of the augmented bound was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmpiricalTermSource {
    /// `E_{g∼Q} (1/m) Σ ‖g*(xᵢ) − g(xᵢ)‖` with the true `g*`.
    Exact,
    /// A triangle-inequality upper surrogate computed without `g*`.
    Surrogate,
}

/// Where the `‖g*‖` value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GStarSource {
    Oracle,
    /// The fitted `‖W‖` standing in for an unknown `g*`.
    PlugIn,
}

/// Inputs of [`augmented_excess_bound`] that are not part of the posterior.
#[derive(Clone, Copy, Debug)]
pub struct AugmentedInputs {
    pub empirical_abs_term: f64,
    pub empirical_source: EmpiricalTermSource,
    pub g_star_norm: f64,
    pub g_star_source: GStarSource,
    pub delta: f64,
}

/// Bound on the excess task risk `E_{f∼Q} E(f) − E(f*)`.
pub fn augmented_excess_bound(
    q: &GaussianPosterior,
    prior: &PriorConfig,
    embedding: &LossEmbedding,
    inputs: &AugmentedInputs,
) -> Result<BoundCertificate> {
    check_delta(inputs.delta)?;
    if inputs.empirical_source == EmpiricalTermSource::Exact && inputs.g_star_source == GStarSource::PlugIn {
        return Err(Error::input(
            "an exact empirical term requires the true g*, but g* is marked as a plug-in value",
        ));
    }
    if !(inputs.empirical_abs_term >= 0.0 && inputs.empirical_abs_term.is_finite()) {
        return Err(Error::input("the empirical term must be finite and nonnegative"));
    }
    let n = q.n_params();
    let kl = kl_isotropic(q, prior)?;
    let eps = penalty_epsilon(prior, inputs.g_star_norm, n)?;
    let mut flags = Vec::new();
    if inputs.empirical_source == EmpiricalTermSource::Surrogate {
        flags.push(FLAG_SURROGATE.to_string());
    }
    if inputs.g_star_source == GStarSource::PlugIn {
        flags.push(FLAG_PLUG_IN.to_string());
    }
    if n < MIN_PARAMS_FOR_PENALTY {
        flags.push(FLAG_FEW_PARAMS.to_string());
    }
    let mut c = BoundCertificate {
        kind: BoundKind::AugmentedExcess,
        empirical_term: inputs.empirical_abs_term,
        kl_term: kl,
        penalty_term: eps,
        confidence_term: (2.0 / inputs.delta).ln(),
        total: 0.0,
        params: CertificateParams {
            delta: inputs.delta,
            alpha: Some(prior.alpha),
            t: Some(prior.t),
            m: prior.m,
            n_params: Some(n),
            kappa: Some(prior.kappa),
            c_delta: Some(embedding.c_delta()),
            g_star_norm: Some(inputs.g_star_norm),
            parametrization: Some(q.parametrization.tag()),
            ..Default::default()
        },
        flags,
    };
    c.total = c.recompute_total();
    Ok(c)
}

/// Tolerance on `k(x, x) = 1` for the KDE bound.
pub const KDE_NORMALIZATION_TOL: f64 = 1e-9;

/// KDE bound for a deterministic surrogate under a normalized kernel.
pub fn kde_bound(
    model: &dyn SurrogateModel,
    kernel: &Kernel,
    data: &RegressionData,
    delta: f64,
) -> Result<BoundCertificate> {
    check_delta(delta)?;
    for i in 0..data.m() {
        let row: Vec<f64> = data.xs.row(i).iter().copied().collect();
        let kxx = kernel.diag(&row);
        if (kxx - 1.0).abs() > KDE_NORMALIZATION_TOL {
            return Err(Error::Precondition(format!(
                "kernel {} is not normalized: k(x, x) = {kxx} at row {i}",
                kernel.name()
            )));
        }
    }
    let risk = model_quadratic_risk(model, data)?;
    let mut c = BoundCertificate {
        kind: BoundKind::Kde,
        empirical_term: risk,
        kl_term: 9.0 / 8.0 * model.norm_sq(),
        penalty_term: 0.0,
        confidence_term: (1.0 / delta).ln(),
        total: 0.0,
        params: CertificateParams {
            delta,
            m: data.m() as f64,
            ..Default::default()
        },
        flags: Vec::new(),
    };
    c.total = c.recompute_total();
    Ok(c)
}

/// Range constants `K(W) = B ‖W‖_F + C` of the hypothesis-dependent range condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypeConstants {
    /// `max ‖X(x)‖` over the data.
    pub b: f64,
    /// `max ‖g*(x)‖` over the data, or the assumed bound.
    pub c: f64,
    pub k: f64,
}

/// `g_star_values` holds one row `g*(xᵢ)` per input; otherwise `assumed_c` must be given.
pub fn hype_constants(
    regressor: &LinearRegressor,
    xs: &DMatrix<f64>,
    g_star_values: Option<&DMatrix<f64>>,
    assumed_c: Option<f64>,
) -> Result<HypeConstants> {
    if xs.nrows() == 0 {
        return Err(Error::input("empty dataset"));
    }
    if xs.ncols() != regressor.dim_f() {
        return Err(Error::dim("feature columns", regressor.dim_f(), xs.ncols()));
    }
    let b = xs.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let c = match (g_star_values, assumed_c) {
        (Some(g), _) => {
            if g.nrows() != xs.nrows() {
                return Err(Error::dim("g* rows", xs.nrows(), g.nrows()));
            }
            g.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
        }
        (None, Some(c)) if c >= 0.0 && c.is_finite() => c,
        (None, Some(c)) => return Err(Error::input(format!("assumed C must be nonnegative, got {c}"))),
        (None, None) => return Err(Error::input("either g* values or an assumed bound C is required")),
    };
    Ok(HypeConstants {
        b,
        c,
        k: b * regressor.frobenius_norm() + c,
    })
}
