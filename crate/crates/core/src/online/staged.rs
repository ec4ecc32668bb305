use super::{
    check_epsilon, make_stage_schedule, DeltaRule, FailureTag, OnlineError, PotentialState,
    RunOptions, RunTrace, StageRecord, StageSchedule,
};
use crate::estimators::{
    feas_estimator, objective_estimator, stage_params, EstimatorError, FeasibilityEstimate,
};
use crate::model::{evaluate_outcome, Instance, RequestStream, NO_SERVICE};

/// Staged algorithm with a known feasibility margin `xi`.
///
/// The first `⌊εT⌋` requests are only observed. Stage `r` re-estimates `W_ε`
/// from the previous stage's requests and runs the potential argmin on its
/// own requests with freshly initialized potentials.
pub fn run_alg_a1(
    inst: &Instance,
    stream: &RequestStream,
    epsilon: f64,
    gamma1: f64,
    xi: f64,
    opts: &RunOptions,
) -> Result<RunTrace, OnlineError> {
    check_epsilon(epsilon)?;
    check_gamma("gamma1", gamma1)?;
    if xi <= epsilon {
        return Err(EstimatorError::MarginExhausted { xi, epsilon }.into());
    }
    let schedule = make_stage_schedule(epsilon, inst.horizon(), DeltaRule::A1)?;
    run_stages(inst, stream, epsilon, gamma1, xi, &schedule, None, opts)
}

/// Staged algorithm that first estimates the feasibility margin from the
/// observation stage and then runs the [`run_alg_a1`] body with it.
pub fn run_alg_a2(
    inst: &Instance,
    stream: &RequestStream,
    epsilon: f64,
    gamma1: f64,
    gamma2: f64,
    opts: &RunOptions,
) -> Result<RunTrace, OnlineError> {
    check_epsilon(epsilon)?;
    check_gamma("gamma1", gamma1)?;
    check_gamma("gamma2", gamma2)?;
    let schedule = make_stage_schedule(epsilon, inst.horizon(), DeltaRule::A2)?;
    let observed = &stream.types[schedule.observe_range()];
    let estimate = match feas_estimator(inst, observed, gamma2, schedule.delta) {
        Ok(est) => est,
        Err(EstimatorError::Infeasible(_)) => {
            return unserved(inst, stream, &schedule, FailureTag::EstimatorInfeasible { stage: -1 });
        }
        Err(e) => return Err(e.into()),
    };
    if estimate.xi_hat <= epsilon {
        let tag = FailureTag::MarginExhausted {
            xi_hat: estimate.xi_hat,
            epsilon,
        };
        let mut trace = unserved(inst, stream, &schedule, tag)?;
        trace.feasibility = Some(estimate);
        return Ok(trace);
    }
    let xi = estimate.xi_hat;
    run_stages(inst, stream, epsilon, gamma1, xi, &schedule, Some(estimate), opts)
}

fn check_gamma(name: &str, value: f64) -> Result<(), OnlineError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(OnlineError::InvalidParameter(format!("{name} = {value} must be finite and > 0")))
    }
}

fn unserved(
    inst: &Instance,
    stream: &RequestStream,
    schedule: &StageSchedule,
    failure: FailureTag,
) -> Result<RunTrace, OnlineError> {
    let decisions = vec![NO_SERVICE; stream.len()];
    Ok(RunTrace {
        outcome: evaluate_outcome(inst, stream, &decisions)?,
        serve_start: schedule.t_init,
        initial: None,
        stages: Vec::new(),
        feasibility: None,
        failure: Some(failure),
        potentials: Vec::new(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_stages(
    inst: &Instance,
    stream: &RequestStream,
    epsilon: f64,
    gamma1: f64,
    xi: f64,
    schedule: &StageSchedule,
    feasibility: Option<FeasibilityEstimate>,
    opts: &RunOptions,
) -> Result<RunTrace, OnlineError> {
    if stream.len() != inst.horizon() {
        // Let the outcome evaluation report the mismatch.
        evaluate_outcome(inst, stream, &vec![NO_SERVICE; stream.len()])?;
    }
    let mut decisions = vec![NO_SERVICE; stream.len()];
    let mut stages = Vec::with_capacity(schedule.l);
    let mut potentials = Vec::new();
    let mut failure = None;
    for r in 0..schedule.l {
        let previous = &stream.types[schedule.previous_range(r)];
        let objective = match objective_estimator(inst, previous, epsilon) {
            Ok(est) => est,
            Err(EstimatorError::Infeasible(_)) => {
                failure = Some(FailureTag::EstimatorInfeasible { stage: r as i64 - 1 });
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let params = match stage_params(
            r,
            schedule,
            objective.w_r,
            xi,
            epsilon,
            gamma1,
            schedule.delta,
            inst,
        ) {
            Ok(p) => p,
            Err(EstimatorError::NonPositiveEstimate(value)) => {
                failure = Some(FailureTag::NonPositiveEstimate { stage: r, value });
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let mut state = PotentialState::for_stage(inst, epsilon, gamma1, &params);
        let range = schedule.stage_range(r);
        stages.push(StageRecord {
            r,
            start: range.start,
            end: range.end,
            objective,
            params,
            initial: state.clone(),
        });
        for s in range {
            let ty = stream.types[s];
            let i = state.choose(inst, ty);
            state.update(inst.consumption(i, ty), inst.revenue(i, ty));
            if opts.record_potentials {
                potentials.push(state.snapshot(s));
            }
            decisions[s] = i;
        }
    }
    Ok(RunTrace {
        outcome: evaluate_outcome(inst, stream, &decisions)?,
        serve_start: schedule.t_init,
        initial: None,
        stages,
        feasibility,
        failure,
        potentials,
    })
}
