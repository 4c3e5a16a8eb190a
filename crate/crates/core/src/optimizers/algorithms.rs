use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::SeedStream;
use crate::surrogate_regression::LinearRegressor;

use super::control_variate::{stochastic_gradient, ControlVariateConfig, LossHook};
use super::objectives::Problem;
use super::schedule::{StepSchedule, StoppingRule};

/// Blow-up factor over the initial objective treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIters,
    GradTol,
    Plateau,
}

/// Iterate and traces of a descent run.
///
/// Entry `t − 1` of each trace describes iteration `t`: the objective and
/// gradient norm at the iterate the step was taken from, and the step size.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub w: LinearRegressor,
    pub iteration: usize,
    pub objective_trace: Vec<f64>,
    pub grad_norm_trace: Vec<f64>,
    pub step_trace: Vec<f64>,
    pub a_hat_trace: Vec<f64>,
    pub wall_ms_trace: Vec<f64>,
    pub stop_reason: Option<StopReason>,
    pub stream: SeedStream,
    initial_objective: Option<f64>,
    started: Instant,
}

impl OptimState {
    pub fn new(init: LinearRegressor, stream: SeedStream) -> Self {
        Self {
            w: init,
            iteration: 0,
            objective_trace: Vec::new(),
            grad_norm_trace: Vec::new(),
            step_trace: Vec::new(),
            a_hat_trace: Vec::new(),
            wall_ms_trace: Vec::new(),
            stop_reason: None,
            stream,
            initial_objective: None,
            started: Instant::now(),
        }
    }

    pub fn initial_objective(&self) -> Option<f64> {
        self.initial_objective
    }

    fn guard(&mut self, objective: f64) -> Result<()> {
        let initial = *self.initial_objective.get_or_insert(objective);
        let blown = initial > 0.0 && objective > DIVERGENCE_FACTOR * initial;
        if !objective.is_finite() || blown {
            return Err(Error::Diverged {
                iteration: self.iteration + 1,
                objective,
                initial,
            });
        }
        Ok(())
    }

    fn apply(&mut self, gradient: &nalgebra::DMatrix<f64>, gamma: f64, objective: f64, a_hat: Option<f64>) -> Result<()> {
        let next = self.w.matrix() - gradient * gamma;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration: self.iteration + 1,
                objective: f64::INFINITY,
                initial: self.initial_objective.unwrap_or(f64::NAN),
            });
        }
        self.w = LinearRegressor::from_matrix_unchecked(next);
        self.iteration += 1;
        self.objective_trace.push(objective);
        self.grad_norm_trace.push(gradient.norm());
        self.step_trace.push(gamma);
        if let Some(a) = a_hat {
            self.a_hat_trace.push(a);
        }
        self.wall_ms_trace.push(self.started.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }

    /// Trace CSV with columns `iteration,objective,grad_norm,step_size,wall_time_ms`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,objective,grad_norm,step_size,wall_time_ms\n");
        for i in 0..self.iteration {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:.3}",
                i + 1,
                self.objective_trace[i],
                self.grad_norm_trace[i],
                self.step_trace[i],
                self.wall_ms_trace[i]
            );
        }
        s
    }

    /// The trace without the wall-clock column; identical across reruns.
    pub fn deterministic_trace(&self) -> String {
        let mut s = String::new();
        for i in 0..self.iteration {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?}",
                i + 1,
                self.objective_trace[i],
                self.grad_norm_trace[i],
                self.step_trace[i]
            );
        }
        s
    }
}

fn grad_converged(stop: &StoppingRule, grad_norm: f64, w: &LinearRegressor) -> bool {
    stop.grad_tol
        .is_some_and(|tol| grad_norm <= tol * (1.0 + w.frobenius_norm()))
}

/// Gradient descent on the relaxed objective `Ĵ_c`.
pub fn relax_gd(
    problem: &Problem,
    init: LinearRegressor,
    schedule: &StepSchedule,
    stop: &StoppingRule,
) -> Result<OptimState> {
    schedule.validate()?;
    problem.check(init.matrix())?;
    let mut state = OptimState::new(init, SeedStream::new(0));
    state.stop_reason = Some(StopReason::MaxIters);
    for t in 1..=stop.max_iters {
        let objective = problem.objective_j_c(&state.w)?;
        state.guard(objective)?;
        let g = problem.grad_j_c(&state.w)?;
        if grad_converged(stop, g.norm(), &state.w) {
            state.stop_reason = Some(StopReason::GradTol);
            break;
        }
        state.apply(&g, schedule.step(t), objective, None)?;
        if stop.plateaued(&state.objective_trace) {
            state.stop_reason = Some(StopReason::Plateau);
            break;
        }
    }
    Ok(state)
}

/// One Q-SSGD iteration: `W ← W − γ_t (η̂_M(L − âB) + â η_B + η_P)`.
///
/// Iteration `t` draws its gradient samples from `stream/grad/t` and its `â`
/// samples from `stream/a_hat/t`.
pub fn q_ssgd_step(
    state: &mut OptimState,
    problem: &Problem,
    schedule: &StepSchedule,
    cv: &ControlVariateConfig,
    hook: Option<LossHook>,
) -> Result<()> {
    let t = state.iteration as u64 + 1;
    let grad_stream = state.stream.derive("grad").at(t);
    let a_stream = state.stream.derive("a_hat").at(t);
    let g = stochastic_gradient(problem, &state.w, cv, &grad_stream, &a_stream, hook)?;
    state.guard(g.objective_estimate)?;
    state.apply(&g.gradient, schedule.step(t as usize), g.objective_estimate, Some(g.a_hat))
}

/// Full Q-SSGD loop (control variate as configured).
pub fn q_ssgd(
    problem: &Problem,
    init: LinearRegressor,
    schedule: &StepSchedule,
    cv: &ControlVariateConfig,
    stop: &StoppingRule,
    stream: &SeedStream,
) -> Result<OptimState> {
    schedule.validate()?;
    cv.validate()?;
    problem.check(init.matrix())?;
    let mut state = OptimState::new(init, stream.clone());
    state.stop_reason = Some(StopReason::MaxIters);
    for _ in 0..stop.max_iters {
        q_ssgd_step(&mut state, problem, schedule, cv, None)?;
        if grad_converged(stop, *state.grad_norm_trace.last().unwrap(), &state.w) {
            state.stop_reason = Some(StopReason::GradTol);
            break;
        }
        if stop.plateaued(&state.objective_trace) {
            state.stop_reason = Some(StopReason::Plateau);
            break;
        }
    }
    Ok(state)
}

/// Naive score-function gradient descent: Q-SSGD with the control variate off.
pub fn sf_gd(
    problem: &Problem,
    init: LinearRegressor,
    schedule: &StepSchedule,
    m_samples: usize,
    stop: &StoppingRule,
    stream: &SeedStream,
) -> Result<OptimState> {
    q_ssgd(problem, init, schedule, &ControlVariateConfig::naive(m_samples), stop, stream)
}
