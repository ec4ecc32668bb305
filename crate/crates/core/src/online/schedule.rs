use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::OnlineError;

/// Which failure budget the schedule carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaRule {
    /// `δ = ε / (3l)`
    A1,
    /// `δ = ε / (3l + 2)`, leaving room for the feasibility estimate.
    A2,
}

/// Geometric split of the horizon: an observation stage of `t_init = ⌊εT⌋`
/// requests followed by `l` stages of `⌊ε 2^r T⌋` requests, the last one
/// truncated or extended so every request is accounted for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub l: usize,
    pub delta: f64,
    pub t_init: usize,
    pub stages: Vec<usize>,
}

impl StageSchedule {
    pub fn horizon(&self) -> usize {
        self.t_init + self.stages.iter().sum::<usize>()
    }

    /// Requests seen before any service starts.
    pub fn observe_range(&self) -> Range<usize> {
        0..self.t_init
    }

    pub fn stage_range(&self, r: usize) -> Range<usize> {
        let start = self.t_init + self.stages[..r].iter().sum::<usize>();
        start..start + self.stages[r]
    }

    /// Requests whose estimate feeds stage `r`.
    pub fn previous_range(&self, r: usize) -> Range<usize> {
        if r == 0 {
            self.observe_range()
        } else {
            self.stage_range(r - 1)
        }
    }
}

fn floor_count(x: f64) -> usize {
    // Guards products like 0.29·100 = 28.999… from losing a request.
    (x + 1e-9).floor() as usize
}

pub fn make_stage_schedule(
    epsilon: f64,
    horizon: usize,
    rule: DeltaRule,
) -> Result<StageSchedule, OnlineError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(OnlineError::InvalidEpsilon(epsilon));
    }
    let t = horizon as f64;
    if t * epsilon < 1.0 {
        return Err(OnlineError::HorizonTooShort { horizon, epsilon });
    }
    let l = ((1.0 / epsilon).log2() - 1e-12).ceil().max(1.0) as usize;
    let t_init = floor_count(epsilon * t);
    let mut stages: Vec<usize> = (0..l)
        .map(|r| floor_count(epsilon * (1u64 << r) as f64 * t))
        .collect();
    let before_last: usize = t_init + stages[..l - 1].iter().sum::<usize>();
    if before_last >= horizon {
        return Err(OnlineError::HorizonTooShort { horizon, epsilon });
    }
    stages[l - 1] = horizon - before_last;
    if stages.contains(&0) {
        return Err(OnlineError::HorizonTooShort { horizon, epsilon });
    }
    let lf = l as f64;
    let delta = match rule {
        DeltaRule::A1 => epsilon / (3.0 * lf),
        DeltaRule::A2 => epsilon / (3.0 * lf + 2.0),
    };
    Ok(StageSchedule {
        l,
        delta,
        t_init,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_of_two_epsilon() {
        let s = make_stage_schedule(0.25, 1600, DeltaRule::A1).unwrap();
        assert_eq!(s.l, 2);
        assert_eq!(s.t_init, 400);
        assert_eq!(s.stages, vec![400, 800]);
        assert_eq!(s.delta, 0.25 / 6.0);
        assert_eq!(s.stage_range(1), 800..1600);
        let s = make_stage_schedule(0.25, 1600, DeltaRule::A2).unwrap();
        assert_eq!(s.delta, 0.25 / 8.0);
    }

    #[test]
    fn single_stage() {
        let s = make_stage_schedule(0.5, 100, DeltaRule::A1).unwrap();
        assert_eq!((s.l, s.t_init, s.stages.clone()), (1, 50, vec![50]));
    }

    #[test]
    fn truncated_final_stage() {
        let s = make_stage_schedule(0.3, 1000, DeltaRule::A1).unwrap();
        assert_eq!(s.l, 2);
        assert_eq!(s.t_init, 300);
        assert_eq!(s.stages, vec![300, 400]);
        assert_eq!(s.horizon(), 1000);
    }

    #[test]
    fn rejects_bad_epsilon_and_short_horizons() {
        assert!(matches!(
            make_stage_schedule(0.0, 100, DeltaRule::A1),
            Err(OnlineError::InvalidEpsilon(_))
        ));
        assert!(make_stage_schedule(1.0, 100, DeltaRule::A1).is_err());
        assert!(matches!(
            make_stage_schedule(0.01, 50, DeltaRule::A1),
            Err(OnlineError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn totals_always_match_horizon() {
        for eps in [0.03, 0.1, 0.125, 0.2, 0.3, 0.45, 0.5, 0.7, 0.9] {
            for horizon in [40usize, 97, 1000, 12345] {
                if let Ok(s) = make_stage_schedule(eps, horizon, DeltaRule::A1) {
                    assert_eq!(s.horizon(), horizon, "eps={eps} T={horizon}");
                    assert!(s.stages.iter().all(|&t| t >= 1));
                    assert_eq!(s.stages.len(), s.l);
                }
            }
        }
    }
}
