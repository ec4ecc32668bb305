use super::{check_epsilon, OnlineError, PotentialState, RunOptions, RunTrace};
use crate::model::{evaluate_outcome, Instance, RequestStream};

/// Serves every request through the three-potential argmin, given only the
/// bounds, the maxima `ā`, `w̄` and the target optimum `w_tau`.
pub fn run_alg_a(
    inst: &Instance,
    stream: &RequestStream,
    epsilon: f64,
    w_tau: f64,
    opts: &RunOptions,
) -> Result<RunTrace, OnlineError> {
    check_epsilon(epsilon)?;
    if !(w_tau > 0.0 && w_tau.is_finite()) {
        return Err(OnlineError::InvalidParameter(format!("W_tau = {w_tau} must be > 0")));
    }
    let mut state = PotentialState::for_known_optimum(inst, epsilon, w_tau);
    let initial = state.clone();
    let mut potentials = Vec::new();
    let mut decisions = Vec::with_capacity(stream.len());
    for (s, &ty) in stream.types.iter().enumerate() {
        let i = state.choose(inst, ty);
        state.update(inst.consumption(i, ty), inst.revenue(i, ty));
        if opts.record_potentials {
            potentials.push(state.snapshot(s));
        }
        decisions.push(i);
    }
    Ok(RunTrace {
        outcome: evaluate_outcome(inst, stream, &decisions)?,
        serve_start: 0,
        initial: Some(initial),
        stages: Vec::new(),
        feasibility: None,
        failure: None,
        potentials,
    })
}
