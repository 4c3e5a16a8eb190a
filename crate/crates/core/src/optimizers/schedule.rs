use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step sizes `γ_t` for iterations `t = 1, 2, …`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `γ_t = 1 / (w + t)^ν` with `ν ∈ (½, 1]` and `w ≥ 0`.
    Decay { nu: f64, w: f64 },
    Constant { gamma: f64 },
}

impl StepSchedule {
    pub fn decay(nu: f64, w: f64) -> Result<Self> {
        let s = StepSchedule::Decay { nu, w };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(gamma: f64) -> Result<Self> {
        let s = StepSchedule::Constant { gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Decay { nu, w } => {
                if !(nu > 0.5 && nu <= 1.0) {
                    return Err(Error::input(format!("nu must lie in (1/2, 1], got {nu}")));
                }
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::input(format!("w must be nonnegative, got {w}")));
                }
            }
            StepSchedule::Constant { gamma } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::input(format!("learning rate must be positive, got {gamma}")));
                }
            }
        }
        Ok(())
    }

    /// Step size for iteration `t ≥ 1`.
    pub fn step(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        match *self {
            StepSchedule::Decay { nu, w } => (w + t as f64).powf(-nu),
            StepSchedule::Constant { gamma } => gamma,
        }
    }
}

/// When to stop an optimization loop. The loop always stops at `max_iters`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iters: usize,
    /// Stop once `‖∇‖ ≤ tol · (1 + ‖W‖_F)`.
    pub grad_tol: Option<f64>,
    /// Stop once the objective moved by at most `rel · |objective|` over the
    /// last `window` iterations.
    pub plateau: Option<Plateau>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub window: usize,
    pub rel: f64,
}

impl StoppingRule {
    pub fn max_iters_only(max_iters: usize) -> Self {
        Self {
            max_iters,
            grad_tol: None,
            plateau: None,
        }
    }

    /// Plateau test on an objective trace.
    pub(crate) fn plateaued(&self, trace: &[f64]) -> bool {
        let Some(p) = self.plateau else { return false };
        if p.window == 0 || trace.len() <= p.window {
            return false;
        }
        let recent = &trace[trace.len() - 1 - p.window..];
        let (lo, hi) = recent
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let last = *trace.last().unwrap();
        hi - lo <= p.rel * last.abs()
    }
}

impl Default for StoppingRule {
    /// `10⁴` iterations, gradient tolerance `10⁻⁶`, plateau of 50 iterations at `10⁻⁸`.
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            grad_tol: Some(1e-6),
            plateau: Some(Plateau { window: 50, rel: 1e-8 }),
        }
    }
}
