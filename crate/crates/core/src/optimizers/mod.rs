//! Bound-minimizing learners.
//!
//! * [`relax_gd`]: gradient descent on the relaxed objective
//!   `Ĵ_c(W) = (1/m) Σ √(β_k + ‖φ(y_k) − W x_k‖²) + λ ‖W‖²`, an upper bound on
//!   `Ĵ(W) = E_{V∼Q(W)} (1/m) Σ ‖φ(y_k) − V x_k‖ + λ ‖W‖²`.
//! * [`sf_gd`]: stochastic descent on `Ĵ` with the score-function estimator.
//! * [`q_ssgd`]: the same with the quadratic control variate
//!   `B(V) = (1/m) Σ ‖φ(y_k) − V x_k‖²`, whose expected gradient is exact.
//!
//! Here `λ = λ_m^α(t) = 1/(2σ₀² m^α)` and `β_k = σ′² · dim_h · ‖x_k‖²`.

mod algorithms;
mod control_variate;
mod objectives;
mod schedule;

pub use algorithms::{q_ssgd, q_ssgd_step, relax_gd, sf_gd, OptimState, StopReason, DIVERGENCE_FACTOR};
pub use control_variate::{
    estimate_a_hat, estimate_a_hat_with, score_function_gradient, score_function_gradient_with, stochastic_gradient,
    AHat, AHatEstimate, ControlVariateConfig, LossHook, SfeEstimate, StochasticGradient,
};
pub use objectives::Problem;
pub use schedule::{Plateau, StepSchedule, StoppingRule};
