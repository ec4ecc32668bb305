//! Sample-based estimators of `W_β` and of the measure of feasibility, and
//! the per-stage error parameters of the staged algorithm.
//!
//! Both estimator LPs are written over request *types*: requests sharing a
//! type are interchangeable, so averaging any per-request solution over each
//! type gives an aggregated solution with the same objective and the same
//! constraint values. The aggregated LP therefore has exactly the optimum of
//! the per-request LP while staying `|I|·J` variables wide.
//!
//! The two error formulas differ in their logarithm on purpose:
//! [`feas_estimator`] uses `ln(K/δ)` and [`stage_params`] uses
//! `ln((2K+1)/δ)`. Each is kept as stated for its own call site.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LpStatus};
use crate::model::Instance;
use crate::offline::{policy_lp, OfflineError, PolicyObjective};
use crate::online::StageSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("estimator needs at least one request")]
    NoRequests,
    #[error("request type {0} out of range")]
    InvalidType(usize),
    #[error("{0} is infeasible on the observed requests")]
    Infeasible(&'static str),
    #[error("feasibility margin exhausted (xi = {xi} ≤ epsilon = {epsilon})")]
    MarginExhausted { xi: f64, epsilon: f64 },
    #[error("previous-stage objective estimate must be positive (got {0})")]
    NonPositiveEstimate(f64),
    #[error("stage {0} is outside the schedule")]
    StageOutOfRange(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Offline(#[from] OfflineError),
}

impl From<lp::LpError> for EstimatorError {
    fn from(e: lp::LpError) -> Self {
        EstimatorError::Offline(OfflineError::Lp(e))
    }
}

/// Per-type counts of a request slice.
pub fn type_counts(inst: &Instance, requests: &[usize]) -> Result<Vec<f64>, EstimatorError> {
    let mut counts = vec![0.0; inst.num_types()];
    for &ty in requests {
        *counts.get_mut(ty).ok_or(EstimatorError::InvalidType(ty))? += 1.0;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEstimate {
    pub w_r: f64,
    pub t_r: usize,
    pub beta: f64,
}

/// Optimum of `E(β)` rebuilt on `requests`, with both bounds scaled by `t_r/T`.
pub fn objective_estimator(
    inst: &Instance,
    requests: &[usize],
    beta: f64,
) -> Result<ObjectiveEstimate, EstimatorError> {
    if requests.is_empty() {
        return Err(EstimatorError::NoRequests);
    }
    let t_r = requests.len();
    let share = t_r as f64 / inst.horizon() as f64;
    let t = inst.horizon() as f64;
    let counts = type_counts(inst, requests)?;
    let lower: Vec<f64> = inst
        .lower()
        .iter()
        .zip(inst.a_bar())
        .map(|(l, a)| share * (l + beta * t * a))
        .collect();
    let upper: Vec<f64> = inst.upper().iter().map(|u| share * u).collect();
    let built = policy_lp(inst, &counts, t_r as f64, &lower, &upper, PolicyObjective::Revenue);
    let sol = lp::solve(&built.problem)?;
    match sol.status {
        LpStatus::Optimal => Ok(ObjectiveEstimate {
            w_r: sol.objective.max(0.0),
            t_r,
            beta,
        }),
        LpStatus::Infeasible => Err(EstimatorError::Infeasible("sampled E(β)")),
        LpStatus::Unbounded => Err(OfflineError::Unbounded("sampled E(β)".into()).into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityEstimate {
    /// `clamp(xi_max − 2·eps_xr, 0, 1)`
    pub xi_hat: f64,
    pub xi_max: f64,
    pub eps_xr: f64,
    pub t_r: usize,
}

/// `√(4 γ₂ T ln(K/δ) / t_r)`
pub fn feas_error(inst: &Instance, t_r: usize, gamma2: f64, delta: f64) -> f64 {
    let t = inst.horizon() as f64;
    let k = inst.num_resources() as f64;
    (4.0 * gamma2 * t * (k / delta).ln() / t_r as f64).sqrt()
}

/// Estimates the measure of feasibility from `requests`.
pub fn feas_estimator(
    inst: &Instance,
    requests: &[usize],
    gamma2: f64,
    delta: f64,
) -> Result<FeasibilityEstimate, EstimatorError> {
    if requests.is_empty() {
        return Err(EstimatorError::NoRequests);
    }
    if gamma2.is_nan() || gamma2 <= 0.0 {
        return Err(EstimatorError::InvalidParameter(format!("gamma2 = {gamma2} must be > 0")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EstimatorError::InvalidParameter(format!("delta = {delta} not in (0, 1)")));
    }
    let t_r = requests.len();
    let share = t_r as f64 / inst.horizon() as f64;
    let counts = type_counts(inst, requests)?;
    let lower: Vec<f64> = inst.lower().iter().map(|l| share * l).collect();
    let upper: Vec<f64> = inst.upper().iter().map(|u| share * u).collect();
    let built = policy_lp(inst, &counts, t_r as f64, &lower, &upper, PolicyObjective::Lift);
    let sol = lp::solve(&built.problem)?;
    let xi_max = match sol.status {
        LpStatus::Optimal => sol.x[built.lift_var.expect("lift variable")].max(0.0),
        LpStatus::Infeasible => return Err(EstimatorError::Infeasible("sampled feasibility LP")),
        LpStatus::Unbounded => {
            return Err(OfflineError::Unbounded("sampled feasibility LP".into()).into())
        }
    };
    let eps_xr = feas_error(inst, t_r, gamma2, delta);
    Ok(FeasibilityEstimate {
        xi_hat: (xi_max - 2.0 * eps_xr).clamp(0.0, 1.0),
        xi_max,
        eps_xr,
        t_r,
    })
}

/// Error parameters and rate constants for one stage of the staged algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub r: usize,
    pub t_r: usize,
    pub t_prev: usize,
    pub eps_x: f64,
    pub eps_x_prev: f64,
    pub eps_y: f64,
    pub c1k: Vec<f64>,
    pub c2: f64,
    pub w_prev: f64,
    pub z_r: f64,
}

/// `√(4 T γ₁ ln((2K+1)/δ) / t)`
pub fn stage_error(inst: &Instance, t: usize, gamma1: f64, delta: f64) -> f64 {
    let k = inst.num_resources() as f64;
    let horizon = inst.horizon() as f64;
    (4.0 * horizon * gamma1 * ((2.0 * k + 1.0) / delta).ln() / t as f64).sqrt()
}

/// Parameters of stage `r` given the previous stage's estimate `w_prev`.
///
/// Stage 0 looks back at the observation stage of size `t_init`.
#[allow(clippy::too_many_arguments)]
pub fn stage_params(
    r: usize,
    schedule: &StageSchedule,
    w_prev: f64,
    xi: f64,
    epsilon: f64,
    gamma1: f64,
    delta: f64,
    inst: &Instance,
) -> Result<StageParams, EstimatorError> {
    if xi <= epsilon {
        return Err(EstimatorError::MarginExhausted { xi, epsilon });
    }
    if w_prev.is_nan() || w_prev <= 0.0 {
        return Err(EstimatorError::NonPositiveEstimate(w_prev));
    }
    let t_r = *schedule.stages.get(r).ok_or(EstimatorError::StageOutOfRange(r))?;
    let t_prev = if r == 0 { schedule.t_init } else { schedule.stages[r - 1] };
    let horizon = inst.horizon() as f64;
    let k = inst.num_resources() as f64;
    let log_term = ((2.0 * k + 1.0) / delta).ln();

    let eps_x = stage_error(inst, t_r, gamma1, delta);
    let eps_x_prev = stage_error(inst, t_prev, gamma1, delta);
    let z_r = horizon * w_prev / ((1.0 + (2.0 + 1.0 / (xi - epsilon)) * eps_x_prev) * t_prev as f64);
    let w_bar = inst.w_bar();
    let eps_y = (4.0 * horizon * log_term * w_bar / (z_r * t_r as f64)).sqrt();
    Ok(StageParams {
        r,
        t_r,
        t_prev,
        eps_x,
        eps_x_prev,
        eps_y,
        c1k: inst.a_bar().iter().map(|a| (1.0 + eps_x).ln() / a).collect(),
        c2: (1.0 + eps_y).ln() / w_bar,
        w_prev,
        z_r,
    })
}
