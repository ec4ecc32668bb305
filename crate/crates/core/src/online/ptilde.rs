use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_epsilon, OnlineError, RunTrace};
use crate::model::{evaluate_outcome, Instance, RequestStream, NO_SERVICE};
use crate::offline::{solve_expected, tau, OfflineError};

/// Routing table of the randomized policy: a type-`j` request goes to serving
/// channel `i ≥ 1` with probability `(1−ε)x(τ)*_ij`, otherwise to no service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PTildePolicy {
    pub epsilon: f64,
    pub tau: f64,
    /// `probs[j][i]`; `probs[j][0]` is the no-service remainder.
    pub probs: Vec<Vec<f64>>,
}

impl PTildePolicy {
    pub fn new(inst: &Instance, epsilon: f64) -> Result<Self, OnlineError> {
        check_epsilon(epsilon)?;
        let tau = tau(epsilon);
        let sol = match solve_expected(inst, tau) {
            Ok(sol) => sol,
            Err(OfflineError::Infeasible(_)) => return Err(OnlineError::StrongFeasibility { tau }),
            Err(e) => return Err(e.into()),
        };
        let probs = (0..inst.num_types())
            .map(|j| {
                let mut row: Vec<f64> = (0..inst.num_channels())
                    .map(|i| {
                        if i == NO_SERVICE {
                            0.0
                        } else {
                            (1.0 - epsilon) * sol.x_star[i][j].clamp(0.0, 1.0)
                        }
                    })
                    .collect();
                row[NO_SERVICE] = (1.0 - row.iter().sum::<f64>()).max(0.0);
                row
            })
            .collect();
        Ok(PTildePolicy {
            epsilon,
            tau,
            probs,
        })
    }

    /// Channel for a type-`ty` request given a uniform draw `u ∈ [0, 1)`.
    pub fn route(&self, ty: usize, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs[ty].iter().enumerate().skip(1) {
            acc += p;
            if u < acc {
                return i;
            }
        }
        NO_SERVICE
    }
}

/// Routes each request independently through [`PTildePolicy`]. The draws
/// come from a ChaCha stream keyed by the request stream's seed on a
/// separate stream id, so the same stream always yields the same decisions.
pub fn run_ptilde(
    inst: &Instance,
    stream: &RequestStream,
    epsilon: f64,
) -> Result<RunTrace, OnlineError> {
    let policy = PTildePolicy::new(inst, epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream.seed);
    rng.set_stream(1);
    let decisions: Vec<usize> = stream
        .types
        .iter()
        .map(|&ty| policy.route(ty, rng.gen::<f64>()))
        .collect();
    Ok(RunTrace {
        outcome: evaluate_outcome(inst, stream, &decisions)?,
        serve_start: 0,
        initial: None,
        stages: Vec::new(),
        feasibility: None,
        failure: None,
        potentials: Vec::new(),
    })
}
