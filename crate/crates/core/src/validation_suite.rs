//! Deterministic numerical experiments emitting CSV tables and pass/fail checks.
//!
//! Each experiment writes `<experiment>_<seed>.csv`; [`run_suite`] also writes
//! `manifest.json` with configs, recipes, file digests and every check.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certificates::{exp_identity_bound, penalty_epsilon, penalty_epsilon_prime};
use crate::datasets::{make_synthetic, SyntheticConfig};
use crate::error::{Error, Result};
use crate::format::write_atomic;
use crate::gaussian_posterior::{kl_isotropic_parts, kl_unit_parametrization, GaussianPosterior, Parametrization, PriorConfig};
use crate::loss_embedding::{Label, LossEmbedding};
use crate::seed::SeedStream;
use crate::stats::{mean, pearson, variance, McEstimate};
use crate::surrogate_regression::{mean_row_norm, LinearRegressor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    RelaxationGap,
    Correlation,
    PenaltyCurve,
    KlCurve,
    ExpIdentity,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::RelaxationGap,
        Experiment::Correlation,
        Experiment::PenaltyCurve,
        Experiment::KlCurve,
        Experiment::ExpIdentity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::RelaxationGap => "relaxation_gap",
            Experiment::Correlation => "correlation",
            Experiment::PenaltyCurve => "penalty_curve",
            Experiment::KlCurve => "kl_curve",
            Experiment::ExpIdentity => "exp_identity",
        }
    }

    pub fn file_name(self, seed: u64) -> String {
        format!("{}_{seed}.csv", self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                Error::input(format!("unknown experiment `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// A machine-checkable assertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
    pub checks: Vec<Check>,
    pub config: serde_json::Value,
    /// How the inputs were generated.
    pub recipe: String,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Header plus rows; floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

// ---------------------------------------------------------------------------
// relaxation gap

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationGapConfig {
    pub sigmas: Vec<f64>,
    pub mc_samples: usize,
    pub n_labels: usize,
    pub feature_dim: usize,
}

impl Default for RelaxationGapConfig {
    fn default() -> Self {
        let mut sigmas = vec![0.0];
        sigmas.extend(log_grid(1e-3, 1e3, 13));
        Self {
            sigmas,
            mc_samples: 10_000,
            n_labels: 3,
            feature_dim: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaxationGapRow {
    pub sigma: f64,
    pub lhs: McEstimate,
    pub rhs: f64,
    pub rel_gap: f64,
}

/// `E‖y − V x‖` for `V ∼ N(W, σ² I)` against `√(σ² dim(y) ‖x‖² + ‖y − W x‖²)`.
///
/// Draw `k` at grid point `j` comes from `stream/j/k`.
pub fn run_relaxation_gap(
    w: &DMatrix<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    sigmas: &[f64],
    mc_samples: usize,
    stream: &SeedStream,
) -> Result<Vec<RelaxationGapRow>> {
    if w.nrows() != y.len() || w.ncols() != x.len() {
        return Err(Error::dim("regressor shape", y.len() * x.len(), w.nrows() * w.ncols()));
    }
    if mc_samples == 0 {
        return Err(Error::input("at least one Monte Carlo sample is required"));
    }
    let mean_w = LinearRegressor::new(w.clone())?;
    let base = (y - w * x).norm_squared();
    let d = y.len() as f64;
    sigmas
        .iter()
        .enumerate()
        .map(|(j, &sigma)| {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::input(format!("sigma must be finite and nonnegative, got {sigma}")));
            }
            let rhs = (sigma * sigma * d * x.norm_squared() + base).sqrt();
            let lhs = if sigma == 0.0 {
                McEstimate::exact(base.sqrt())
            } else {
                let q = GaussianPosterior::new(mean_w.clone(), sigma * sigma, Parametrization::Custom(sigma * sigma))?;
                let point = stream.at(j as u64);
                let draws: Vec<f64> = (0..mc_samples)
                    .map(|k| (y - q.sample_regressor(&point.at(k as u64)).matrix() * x).norm())
                    .collect();
                McEstimate::from_samples(&draws)
            };
            let rel_gap = if rhs == 0.0 { 0.0 } else { (lhs.mean - rhs).abs() / rhs };
            Ok(RelaxationGapRow { sigma, lhs, rhs, rel_gap })
        })
        .collect()
}

/// `√(2/d) Γ((d+1)/2) / Γ(d/2) = E‖G‖ / √(E‖G‖²)` for `G ∼ N(0, I_d)`.
pub fn gaussian_norm_ratio(d: usize) -> f64 {
    assert!(d >= 1);
    // r(d) = Γ((d+1)/2)/Γ(d/2) with r(d + 2) = r(d) (d + 1)/d
    let (mut r, mut k) = if d % 2 == 1 {
        (1.0 / std::f64::consts::PI.sqrt(), 1)
    } else {
        (std::f64::consts::PI.sqrt() / 2.0, 2)
    };
    while k < d {
        r *= (k + 1) as f64 / k as f64;
        k += 2;
    }
    (2.0 / d as f64).sqrt() * r
}

fn relaxation_report(seed: u64, cfg: &RelaxationGapConfig) -> Result<ExperimentReport> {
    let stream = SeedStream::new(seed).derive(Experiment::RelaxationGap.name());
    let e = LossEmbedding::hamming(cfg.n_labels)?;
    let mut rng = stream.derive("instance").rng();
    let p = cfg.feature_dim;
    let mut x = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    x /= x.norm();
    let w = DMatrix::from_fn(e.dim_h(), p, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
    let label = Label::from_index(rng.random_range(0..1u64 << cfg.n_labels), cfg.n_labels);
    let y = e.phi(&label)?;
    let rows = run_relaxation_gap(&w, &x, &y, &cfg.sigmas, cfg.mc_samples, &stream.derive("mc"))?;
    let mut checks = Vec::new();
    let worst_excess = rows
        .iter()
        .map(|r| r.lhs.mean - r.rhs - 3.0 * r.lhs.std_error)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new(
        "lhs_below_rhs_plus_3se",
        worst_excess <= 0.0,
        format!("max(lhs - rhs - 3se) = {worst_excess:e}"),
    ));
    let max_gap = rows.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    checks.push(Check::new("max_rel_gap_at_most_0.15", max_gap <= 0.15, format!("max rel_gap = {max_gap:.6}")));
    if let Some(r0) = rows.iter().find(|r| r.sigma == 0.0) {
        checks.push(Check::new("zero_sigma_gap_is_zero", r0.rel_gap == 0.0, format!("rel_gap = {:e}", r0.rel_gap)));
    }
    Ok(ExperimentReport {
        experiment: Experiment::RelaxationGap,
        columns: vec!["sigma", "lhs_mc", "rhs", "rel_gap", "lhs_std_error"],
        rows: rows
            .iter()
            .map(|r| vec![r.sigma, r.lhs.mean, r.rhs, r.rel_gap, r.lhs.std_error])
            .collect(),
        checks,
        config: serde_json::to_value(cfg)?,
        recipe: format!(
            "x: standard normal in R^{p} scaled to unit norm; W: entries N(0, 0.3^2), shape {}x{p}; y: Hamming embedding of a uniform random label with l={}",
            e.dim_h(),
            cfg.n_labels
        ),
    })
}

// ---------------------------------------------------------------------------
// L/B correlation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    pub m_values: Vec<usize>,
    pub m_samples: usize,
    pub n_experiments: usize,
    /// Standard deviation of the sampled predictors `V ∼ N(0, sd² I)`.
    pub predictor_sd: f64,
    pub support_size: usize,
    pub n_labels: usize,
    pub concentration: f64,
    pub feature_dim: usize,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            m_values: vec![10, 30, 100, 300, 1000],
            m_samples: 500,
            n_experiments: 100,
            predictor_sd: 1.0,
            support_size: 16,
            n_labels: 3,
            concentration: 0.5,
            feature_dim: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationRow {
    pub m: usize,
    pub mean_corr: f64,
    pub corr_std: f64,
}

/// Optional map applied to each `(L, B)` pair before correlating.
pub type CorrelationHook<'h> = &'h dyn Fn(f64, f64) -> (f64, f64);

/// Pearson correlation of `L(V)` and `B(V)` over sampled predictors, averaged
/// over independent datasets. Experiment `e` at size `m` uses `stream/m<m>/e`.
pub fn run_correlation_study(cfg: &CorrelationConfig, stream: &SeedStream, hook: Option<CorrelationHook>) -> Result<Vec<CorrelationRow>> {
    if cfg.m_samples < 2 || cfg.n_experiments == 0 {
        return Err(Error::input("the correlation study needs M >= 2 and at least one experiment"));
    }
    if !(cfg.predictor_sd > 0.0 && cfg.predictor_sd.is_finite()) {
        return Err(Error::input("predictor_sd must be positive"));
    }
    let mut syn = SyntheticConfig::new(cfg.support_size, cfg.n_labels, cfg.concentration);
    syn.feature_dim = cfg.feature_dim;
    let task_seed = stream.derive("task").rng().random::<u64>();
    let task = make_synthetic(task_seed, &syn)?;
    let h = task.embedding.dim_h();
    let q = GaussianPosterior::new(
        LinearRegressor::zeros(h, cfg.feature_dim),
        cfg.predictor_sd * cfg.predictor_sd,
        Parametrization::Custom(cfg.predictor_sd * cfg.predictor_sd),
    )?;
    cfg.m_values
        .iter()
        .map(|&m| {
            let size_stream = stream.derive(&format!("m{m}"));
            let mut corrs = Vec::with_capacity(cfg.n_experiments);
            for e in 0..cfg.n_experiments {
                let exp_stream = size_stream.at(e as u64);
                let ds = task.sample_training_set(m, &exp_stream.derive("data"))?;
                let data = ds.regression_data(&task.embedding)?;
                let v_stream = exp_stream.derive("predictors");
                let mut ls = Vec::with_capacity(cfg.m_samples);
                let mut bs = Vec::with_capacity(cfg.m_samples);
                for k in 0..cfg.m_samples {
                    let v = q.sample_regressor(&v_stream.at(k as u64));
                    let r = data.residuals(v.matrix());
                    let (l, b) = (mean_row_norm(&r), r.norm_squared() / m as f64);
                    let (l, b) = match hook {
                        Some(f) => f(l, b),
                        None => (l, b),
                    };
                    ls.push(l);
                    bs.push(b);
                }
                corrs.push(pearson(&ls, &bs).unwrap_or(0.0));
            }
            Ok(CorrelationRow {
                m,
                mean_corr: mean(&corrs),
                corr_std: variance(&corrs).sqrt(),
            })
        })
        .collect()
}

fn correlation_report(seed: u64, cfg: &CorrelationConfig) -> Result<ExperimentReport> {
    let stream = SeedStream::new(seed).derive(Experiment::Correlation.name());
    let rows = run_correlation_study(cfg, &stream, None)?;
    let min_corr = rows.iter().map(|r| r.mean_corr).fold(f64::INFINITY, f64::min);
    let mut checks = vec![Check::new(
        "mean_corr_positive_for_all_m",
        min_corr > 0.0,
        format!("min mean_corr = {min_corr:.6}"),
    )];
    if let Some(last) = rows.iter().max_by_key(|r| r.m) {
        checks.push(Check::new(
            "mean_corr_at_least_0.5_at_largest_m",
            last.mean_corr >= 0.5,
            format!("m = {}: mean_corr = {:.6}", last.m, last.mean_corr),
        ));
    }
    Ok(ExperimentReport {
        experiment: Experiment::Correlation,
        columns: vec!["m", "mean_corr", "corr_std"],
        rows: rows.iter().map(|r| vec![r.m as f64, r.mean_corr, r.corr_std]).collect(),
        checks,
        config: serde_json::to_value(cfg)?,
        recipe: format!(
            "synthetic task: {} support points with unit-norm Gaussian features in R^{}, l={} Hamming, Dirichlet({}) conditionals, uniform marginal; \
             per experiment a fresh training set of size m; predictors V ~ N(0, {}^2 I); L = mean residual norm, B = mean squared residual norm",
            cfg.support_size, cfg.feature_dim, cfg.n_labels, cfg.concentration, cfg.predictor_sd
        ),
    })
}

// ---------------------------------------------------------------------------
// penalty curve

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyCurveConfig {
    pub n_params: usize,
    pub m: f64,
    pub alpha: f64,
    pub g_star_norm: f64,
    pub kappas: Vec<f64>,
    pub ts: Vec<f64>,
}

impl Default for PenaltyCurveConfig {
    fn default() -> Self {
        Self {
            n_params: 100,
            m: 1e4,
            alpha: 0.3,
            g_star_norm: 10.0,
            kappas: vec![0.5, 1.0, 2.0],
            // uniform in logit(t) so that minima near t = 0 are resolved
            ts: (0..199).map(|k| 1.0 / (1.0 + (9.0 - 16.0 * k as f64 / 198.0).exp())).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyCurve {
    pub kappa: f64,
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    /// `ε + K_U(g*)/m^α` on each grid point.
    pub dual: Vec<f64>,
}

impl PenaltyCurve {
    pub fn argmin(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b })
            .0
    }

    /// Strictly decreasing up to the argmin and strictly increasing after it.
    pub fn is_unimodal(&self) -> bool {
        let k = self.argmin();
        self.values[..=k].windows(2).all(|w| w[1] < w[0]) && self.values[k..].windows(2).all(|w| w[1] > w[0])
    }

    pub fn has_interior_min(&self) -> bool {
        let k = self.argmin();
        k > 0 && k + 1 < self.values.len()
    }
}

pub fn run_penalty_curve(cfg: &PenaltyCurveConfig) -> Result<Vec<PenaltyCurve>> {
    if cfg.ts.len() < 3 {
        return Err(Error::input("the t grid needs at least three points"));
    }
    cfg.kappas
        .iter()
        .map(|&kappa| {
            let mut values = Vec::with_capacity(cfg.ts.len());
            let mut dual = Vec::with_capacity(cfg.ts.len());
            for &t in &cfg.ts {
                let prior = PriorConfig::new(cfg.alpha, t, kappa, cfg.m)?;
                values.push(penalty_epsilon_prime(&prior, cfg.g_star_norm, cfg.n_params)?);
                let ku = kl_unit_parametrization(&prior, cfg.g_star_norm * cfg.g_star_norm, cfg.n_params)?;
                dual.push(ku / cfg.m.powf(cfg.alpha) + penalty_epsilon(&prior, cfg.g_star_norm, cfg.n_params)?);
            }
            Ok(PenaltyCurve {
                kappa,
                ts: cfg.ts.clone(),
                values,
                dual,
            })
        })
        .collect()
}

fn penalty_report(cfg: &PenaltyCurveConfig) -> Result<ExperimentReport> {
    let curves = run_penalty_curve(cfg)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for c in &curves {
        for (t, v) in c.ts.iter().zip(&c.values) {
            rows.push(vec![c.kappa, *t, *v]);
        }
        let k = c.argmin();
        checks.push(Check::new(
            format!("unimodal_interior_min_kappa_{}", c.kappa),
            c.is_unimodal() && c.has_interior_min(),
            format!("argmin t = {} (grid index {k} of {})", c.ts[k], c.ts.len()),
        ));
        let worst = c
            .values
            .iter()
            .zip(&c.dual)
            .map(|(a, b)| (a - b).abs() / a.abs().max(1e-300))
            .fold(0.0, f64::max);
        checks.push(Check::new(
            format!("dual_check_kappa_{}", c.kappa),
            worst <= 1e-10,
            format!("max relative difference = {worst:e}"),
        ));
    }
    Ok(ExperimentReport {
        experiment: Experiment::PenaltyCurve,
        columns: vec!["kappa", "t", "epsilon_prime"],
        rows,
        checks,
        config: serde_json::to_value(cfg)?,
        recipe: "closed-form penalty on the configured grid".into(),
    })
}

// ---------------------------------------------------------------------------
// KL curve

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlCurveConfig {
    pub n_params: usize,
    /// Every coordinate of the posterior mean.
    pub mean_entry: f64,
    pub sigmas: Vec<f64>,
}

impl Default for KlCurveConfig {
    fn default() -> Self {
        Self {
            n_params: 10,
            mean_entry: 0.5,
            sigmas: log_grid(0.05, 5.0, 101),
        }
    }
}

/// `KL(N(μ, σ² I) ‖ N(0, I))` summed coordinate by coordinate from the general
/// diagonal-covariance formula.
fn kl_diagonal(mu: &[f64], var_q: &[f64], var_p: &[f64]) -> f64 {
    let mut logdet = 0.0;
    let mut trace = 0.0;
    let mut quad = 0.0;
    for i in 0..mu.len() {
        logdet += var_p[i].ln() - var_q[i].ln();
        trace += var_q[i] / var_p[i];
        quad += mu[i] * mu[i] / var_p[i];
    }
    0.5 * (logdet - mu.len() as f64 + trace + quad)
}

/// Rows `(σ, KL, KL from the diagonal formula)` against the unit prior.
pub fn run_kl_curve(cfg: &KlCurveConfig) -> Result<Vec<[f64; 3]>> {
    let n = cfg.n_params;
    let mu = vec![cfg.mean_entry; n];
    let mean_sq = cfg.mean_entry * cfg.mean_entry * n as f64;
    cfg.sigmas
        .iter()
        .map(|&s| {
            let kl = kl_isotropic_parts(n, mean_sq, s * s, 1.0)?;
            Ok([s, kl, kl_diagonal(&mu, &vec![s * s; n], &vec![1.0; n])])
        })
        .collect()
}

fn kl_report(cfg: &KlCurveConfig) -> Result<ExperimentReport> {
    let rows = run_kl_curve(cfg)?;
    let (k, _) = rows
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, r)| if r[1] < b.1 { (i, r[1]) } else { b });
    let interior = k > 0 && k + 1 < rows.len();
    let worst = rows
        .iter()
        .map(|r| (r[1] - r[2]).abs() / r[2].abs().max(1e-12))
        .fold(0.0, f64::max);
    let checks = vec![
        Check::new("interior_global_min", interior, format!("argmin sigma = {}", rows[k][0])),
        Check::new("dual_check_general_formula", worst <= 1e-9, format!("max relative difference = {worst:e}")),
    ];
    Ok(ExperimentReport {
        experiment: Experiment::KlCurve,
        columns: vec!["sigma", "kl"],
        rows: rows.iter().map(|r| vec![r[0], r[1]]).collect(),
        checks,
        config: serde_json::to_value(cfg)?,
        recipe: format!("posterior N(mu, sigma^2 I_{n}) with every mu entry {}, prior N(0, I)", cfg.mean_entry, n = cfg.n_params),
    })
}

// ---------------------------------------------------------------------------
// exponential identity bound

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpIdentityConfig {
    pub a_values: Vec<f64>,
    pub n_points: usize,
}

impl Default for ExpIdentityConfig {
    fn default() -> Self {
        Self {
            a_values: vec![1.5, 2.0, 3.0, 5.0, 10.0],
            n_points: 101,
        }
    }
}

fn exp_identity_report(cfg: &ExpIdentityConfig) -> Result<ExperimentReport> {
    if cfg.n_points < 2 {
        return Err(Error::input("need at least two x points"));
    }
    let mut rows = Vec::new();
    let mut violations = 0usize;
    for &a in &cfg.a_values {
        for i in 0..cfg.n_points {
            let x = i as f64 / (cfg.n_points - 1) as f64;
            let b = exp_identity_bound(x, a)?;
            if b < x {
                violations += 1;
            }
            rows.push(vec![a, x, b]);
        }
    }
    Ok(ExperimentReport {
        experiment: Experiment::ExpIdentity,
        columns: vec!["a", "x", "bound"],
        rows,
        checks: vec![Check::new("bound_dominates_identity", violations == 0, format!("{violations} violations"))],
        config: serde_json::to_value(cfg)?,
        recipe: "uniform x grid on [0, 1]".into(),
    })
}

// ---------------------------------------------------------------------------
// suite

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub relaxation_gap: RelaxationGapConfig,
    pub correlation: CorrelationConfig,
    pub penalty_curve: PenaltyCurveConfig,
    pub kl_curve: KlCurveConfig,
    pub exp_identity: ExpIdentityConfig,
}

pub fn run_experiment(experiment: Experiment, cfg: &SuiteConfig) -> Result<ExperimentReport> {
    match experiment {
        Experiment::RelaxationGap => relaxation_report(cfg.seed, &cfg.relaxation_gap),
        Experiment::Correlation => correlation_report(cfg.seed, &cfg.correlation),
        Experiment::PenaltyCurve => penalty_report(&cfg.penalty_curve),
        Experiment::KlCurve => kl_report(&cfg.kl_curve),
        Experiment::ExpIdentity => exp_identity_report(&cfg.exp_identity),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub experiment: Experiment,
    pub file: String,
    pub sha256: String,
    pub config: serde_json::Value,
    pub recipe: String,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub version: String,
    pub seed: u64,
    pub experiments: Vec<ManifestEntry>,
    pub all_passed: bool,
}

/// Writes the selected experiments' CSVs and `manifest.json` into `out_dir`.
/// Entries follow the order of `experiments`.
pub fn write_suite(reports: &[ExperimentReport], seed: u64, out_dir: &Path) -> Result<SuiteManifest> {
    std::fs::create_dir_all(out_dir)?;
    let mut entries = Vec::with_capacity(reports.len());
    for r in reports {
        let csv = r.to_csv();
        let file = r.experiment.file_name(seed);
        write_atomic(&out_dir.join(&file), csv.as_bytes())?;
        entries.push(ManifestEntry {
            experiment: r.experiment,
            file,
            sha256: hex::encode(Sha256::digest(csv.as_bytes())),
            config: r.config.clone(),
            recipe: r.recipe.clone(),
            checks: r.checks.clone(),
            passed: r.passed(),
        });
    }
    let manifest = SuiteManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        all_passed: entries.iter().all(|e| e.passed),
        experiments: entries,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&out_dir.join("manifest.json"), &json)?;
    Ok(manifest)
}

/// Runs the experiments sequentially and writes their outputs.
pub fn run_suite(experiments: &[Experiment], cfg: &SuiteConfig, out_dir: &Path) -> Result<SuiteManifest> {
    let reports = experiments
        .iter()
        .map(|&e| run_experiment(e, cfg))
        .collect::<Result<Vec<_>>>()?;
    write_suite(&reports, cfg.seed, out_dir)
}
