//! The three learners: closed-form ILE ridge, Relax-PB (gradient descent on the
//! relaxed bound) and MC-PB (Q-SSGD on the Monte Carlo bound).

use std::str::FromStr;

use pacile::gaussian_posterior::{GaussianPosterior, Parametrization, PriorConfig};
use pacile::kernel_features::Kernel;
use pacile::optimizers::{
    q_ssgd, relax_gd, AHat, ControlVariateConfig, OptimState, Problem, StepSchedule, StoppingRule,
};
use pacile::stats::McEstimate;
use pacile::surrogate_regression::{fit_krr, LinearRegressor};
use pacile::SeedStream;

use crate::config::Config;
use crate::data::{kappa, Prepared};
use crate::error::{config_err, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Ile,
    RelaxPb,
    McPb,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ile => "ile",
            Algorithm::RelaxPb => "relax-pb",
            Algorithm::McPb => "mc-pb",
        }
    }
}

impl FromStr for Algorithm {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "ile" => Ok(Algorithm::Ile),
            "relax-pb" => Ok(Algorithm::RelaxPb),
            "mc-pb" => Ok(Algorithm::McPb),
            other => Err(config_err(format!("unknown algorithm `{other}` (expected ile, relax-pb or mc-pb)"))),
        }
    }
}

/// One entry of a hyperparameter menu.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub key: &'static str,
    pub value: f64,
    pub j_hat: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub algorithm: Algorithm,
    pub prior: PriorConfig,
    pub posterior: GaussianPosterior,
    pub j_hat: McEstimate,
    pub j_c: f64,
    pub candidates: Vec<Candidate>,
    /// Index of the kept candidate.
    pub selected: usize,
    pub trace_csv: Option<String>,
    pub iterations: usize,
    pub stop_reason: Option<String>,
    pub warnings: Vec<String>,
}

impl TrainOutcome {
    /// More than one candidate was scored on the training data.
    pub fn data_dependent(&self) -> bool {
        self.candidates.len() > 1
    }
}

pub fn parametrization(cfg: &Config) -> CliResult<Parametrization> {
    cfg.get("parametrization").parse().map_err(|e: pacile::Error| config_err(e.to_string()))
}

pub fn prior_for(cfg: &Config, prepared: &Prepared, alpha: f64, t: f64) -> CliResult<PriorConfig> {
    let k = kappa(cfg, prepared)?;
    PriorConfig::new(alpha, t, k, prepared.m() as f64).map_err(|e| config_err(e.to_string()))
}

fn schedules(cfg: &Config) -> CliResult<Vec<(f64, StepSchedule)>> {
    let bad = |e: pacile::Error| config_err(e.to_string());
    match cfg.get("schedule") {
        "decay" => {
            let s = StepSchedule::decay(cfg.f64("nu")?, cfg.f64("decay_w")?).map_err(bad)?;
            Ok(vec![(f64::NAN, s)])
        }
        "constant" => {
            let mut rates = cfg.list::<f64>("learning_rates")?;
            if rates.is_empty() {
                rates.push(cfg.f64("learning_rate")?);
            }
            rates
                .into_iter()
                .map(|r| Ok((r, StepSchedule::constant(r).map_err(bad)?)))
                .collect()
        }
        other => Err(config_err(format!("schedule: expected constant or decay, got `{other}`"))),
    }
}

fn cv_config(cfg: &Config) -> CliResult<ControlVariateConfig> {
    let m = cfg.usize("mc_samples")?;
    let mut cv = if cfg.bool("control_variate")? { ControlVariateConfig::with_m(m) } else { ControlVariateConfig::naive(m) };
    if cv.use_cv {
        cv.a_hat = match cfg.get("a_hat") {
            "estimate" => AHat::Estimate,
            v => AHat::Fixed(v.parse().map_err(|_| config_err(format!("a_hat: expected `estimate` or a number, got `{v}`")))?),
        };
    }
    cv.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(cv)
}

fn pick(candidates: &[Candidate]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.j_hat.map(|j| (i, j)))
        .fold(None, |best: Option<(usize, f64)>, (i, j)| match best {
            Some((_, bj)) if bj <= j => best,
            _ => Some((i, j)),
        })
        .map(|(i, _)| i)
}

struct Run {
    w: LinearRegressor,
    j_hat: McEstimate,
    state: Option<OptimState>,
}

/// Trains one posterior for the prior `(alpha, t)`.
///
/// `stream` drives the stochastic optimizer; `eval_stream` drives every
/// `Ĵ` evaluation, so candidates are compared on common random numbers.
pub fn train(
    cfg: &Config,
    prepared: &Prepared,
    algorithm: Algorithm,
    alpha: f64,
    t: f64,
    stream: &SeedStream,
    eval_stream: &SeedStream,
) -> CliResult<TrainOutcome> {
    let prior = prior_for(cfg, prepared, alpha, t)?;
    let param = parametrization(cfg)?;
    let problem = Problem::new(&prepared.data, prior, param)?;
    let eval_samples = cfg.usize("eval_samples")?;
    if eval_samples == 0 {
        return Err(config_err("eval_samples must be positive"));
    }
    let (h, d) = (prepared.embedding.dim_h(), prepared.dataset.d());
    let evaluate = |w: &LinearRegressor| problem.objective_j_hat_mc(w, eval_samples, eval_stream);
    let mut candidates = Vec::new();
    let mut runs: Vec<Option<Run>> = Vec::new();
    match algorithm {
        Algorithm::Ile => {
            let mut lambdas = cfg.list::<f64>("lambda_grid")?;
            if lambdas.is_empty() {
                lambdas.push(match cfg.get("lambda") {
                    "prior" => prior.lambda(),
                    _ => cfg.f64("lambda")?,
                });
            }
            for lam in lambdas {
                match fit_krr(&Kernel::Linear, &prepared.data, lam) {
                    Ok(w) => {
                        let j = evaluate(&w)?;
                        candidates.push(Candidate { key: "lambda", value: lam, j_hat: Some(j.mean), note: String::new() });
                        runs.push(Some(Run { w, j_hat: j, state: None }));
                    }
                    Err(e) => {
                        candidates.push(Candidate { key: "lambda", value: lam, j_hat: None, note: e.to_string() });
                        runs.push(None);
                    }
                }
            }
        }
        Algorithm::RelaxPb | Algorithm::McPb => {
            let max_iters = cfg.usize("max_iters")?;
            let cv = cv_config(cfg)?;
            for (rate, sched) in schedules(cfg)? {
                let init = LinearRegressor::zeros(h, d);
                let result = if algorithm == Algorithm::RelaxPb {
                    let stop = StoppingRule { max_iters, ..StoppingRule::default() };
                    relax_gd(&problem, init, &sched, &stop)
                } else {
                    q_ssgd(&problem, init, &sched, &cv, &StoppingRule::max_iters_only(max_iters), stream)
                };
                match result {
                    Ok(state) => {
                        let j = evaluate(&state.w)?;
                        candidates.push(Candidate { key: "learning_rate", value: rate, j_hat: Some(j.mean), note: String::new() });
                        runs.push(Some(Run { w: state.w.clone(), j_hat: j, state: Some(state) }));
                    }
                    Err(e @ pacile::Error::Diverged { .. }) => {
                        candidates.push(Candidate { key: "learning_rate", value: rate, j_hat: None, note: e.to_string() });
                        runs.push(None);
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    let selected = pick(&candidates).ok_or_else(|| {
        let notes: Vec<String> = candidates.iter().map(|c| format!("{}={}: {}", c.key, c.value, c.note)).collect();
        CliError::Assertion(format!("every {} candidate failed ({})", algorithm.name(), notes.join("; ")))
    })?;
    let run = runs.swap_remove(selected).expect("selected candidate has a run");
    let j_c = problem.objective_j_c(&run.w)?;
    let posterior = problem.posterior(&run.w);
    Ok(TrainOutcome {
        algorithm,
        prior,
        posterior,
        j_hat: run.j_hat,
        j_c,
        candidates,
        selected,
        trace_csv: run.state.as_ref().map(|s| s.trace_csv()),
        iterations: run.state.as_ref().map_or(0, |s| s.iteration),
        stop_reason: run.state.as_ref().and_then(|s| s.stop_reason).map(|r| format!("{r:?}")),
        warnings: prior.warnings(),
    })
}
