//! Online allocation: the randomized expected-policy router, the
//! known-optimum potential algorithm, and the staged algorithms that learn the
//! optimum (and optionally the feasibility margin) from observed requests.
//!
//! Every run is a single-threaded pass over one [`RequestStream`]. A run that
//! fails mid-way (an estimator LP turns infeasible, the margin estimate is
//! exhausted) returns its partial outcome with the remaining requests sent to
//! the no-service channel and a [`FailureTag`] set.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{EstimatorError, FeasibilityEstimate, ObjectiveEstimate, StageParams};
use crate::model::{AllocationOutcome, ModelError};
use crate::offline::OfflineError;

mod greedy;
mod potential;
mod ptilde;
mod schedule;
mod staged;

pub use greedy::run_alg_a;
pub use potential::{PotentialSnapshot, PotentialState};
pub use ptilde::{run_ptilde, PTildePolicy};
pub use schedule::{make_stage_schedule, DeltaRule, StageSchedule};
pub use staged::{run_alg_a1, run_alg_a2};

#[derive(Debug, Error)]
pub enum OnlineError {
    #[error("epsilon = {0} must lie in (0, 1)")]
    InvalidEpsilon(f64),
    #[error("horizon T = {horizon} too short for epsilon = {epsilon}")]
    HorizonTooShort { horizon: usize, epsilon: f64 },
    #[error("strong feasibility violated for τ = {tau}")]
    StrongFeasibility { tau: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Offline(#[from] OfflineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Why a staged run stopped serving early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureTag {
    /// Stage `-1` is the observation stage.
    EstimatorInfeasible { stage: i64 },
    NonPositiveEstimate { stage: usize, value: f64 },
    MarginExhausted { xi_hat: f64, epsilon: f64 },
}

impl fmt::Display for FailureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureTag::EstimatorInfeasible { stage } => {
                write!(f, "estimator infeasible before stage {stage}")
            }
            FailureTag::NonPositiveEstimate { stage, value } => {
                write!(f, "non-positive objective estimate {value} before stage {stage}")
            }
            FailureTag::MarginExhausted { xi_hat, epsilon } => write!(
                f,
                "feasibility margin exhausted (xi_hat = {xi_hat} <= epsilon = {epsilon})"
            ),
        }
    }
}

/// One served stage of a staged run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub r: usize,
    pub start: usize,
    pub end: usize,
    /// `W^{r−1}` from the previous stage's requests.
    pub objective: ObjectiveEstimate,
    pub params: StageParams,
    /// Potentials before the stage's first request.
    pub initial: PotentialState,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Keep the potentials after every served step.
    pub record_potentials: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub outcome: AllocationOutcome,
    /// First request index eligible for service.
    pub serve_start: usize,
    /// Starting potentials of the known-optimum algorithm.
    pub initial: Option<PotentialState>,
    pub stages: Vec<StageRecord>,
    pub feasibility: Option<FeasibilityEstimate>,
    pub failure: Option<FailureTag>,
    pub potentials: Vec<PotentialSnapshot>,
}

impl RunTrace {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), OnlineError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(OnlineError::InvalidEpsilon(epsilon))
    }
}
