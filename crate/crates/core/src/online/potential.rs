//! Exponential potentials of the greedy allocation step.
//!
//! Potentials are held as logarithms; a step's score is a max-shifted
//! log-sum-exp so exponents that grow linearly with the step count never
//! overflow.

use serde::{Deserialize, Serialize};

use crate::estimators::StageParams;
use crate::model::Instance;

/// Capacity potentials `φ_k`, coverage potentials `ϕ_k` and the revenue
/// potential `ψ`, together with the per-step targets they are measured
/// against.
///
/// One step with consumption `a` and revenue `w` contributes
///
/// * `c1_k (a_k − upper_target_k)` to `ln φ_k`,
/// * `c1_k (lower_target_k − a_k)` to `ln ϕ_k`,
/// * `c2 (revenue_target − w)` to `ln ψ`,
///
/// plus `drift_x` (capacity and coverage) or `drift_y` (revenue) on update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialState {
    pub log_phi: Vec<f64>,
    pub log_varphi: Vec<f64>,
    pub log_psi: f64,
    pub c1: Vec<f64>,
    pub c2: f64,
    pub upper_target: Vec<f64>,
    pub lower_target: Vec<f64>,
    pub revenue_target: f64,
    pub drift_x: f64,
    pub drift_y: f64,
}

/// Potentials after one served step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSnapshot {
    pub step: usize,
    pub log_phi: Vec<f64>,
    pub log_varphi: Vec<f64>,
    pub log_psi: f64,
}

impl PotentialState {
    /// Potentials for the known-optimum algorithm: unit start, rates
    /// `−ln(1−ε)/ā_k` and `−ln(1−ε)/w̄`, revenue target `(1−2ε)W_τ/T`.
    pub fn for_known_optimum(inst: &Instance, epsilon: f64, w_tau: f64) -> Self {
        let t = inst.horizon() as f64;
        let kc = inst.num_resources();
        let rate = -(1.0 - epsilon).ln();
        PotentialState {
            log_phi: vec![0.0; kc],
            log_varphi: vec![0.0; kc],
            log_psi: 0.0,
            c1: inst.a_bar().iter().map(|a| rate / a).collect(),
            c2: rate / inst.w_bar(),
            upper_target: inst.upper().iter().map(|u| u / t).collect(),
            lower_target: inst.lower().iter().map(|l| l / t).collect(),
            revenue_target: (1.0 - 2.0 * epsilon) * w_tau / t,
            drift_x: 0.0,
            drift_y: 0.0,
        }
    }

    /// Potentials for one stage of the staged algorithm.
    ///
    /// The coverage potential tracks the shortfall `ā_k − a_k` against
    /// `(1+ε_x)((1−ε)Tā_k − L_k)/T`; both families start at
    /// `exp(−(t_r−1)·drift)` and gain their drift on every update.
    pub fn for_stage(inst: &Instance, epsilon: f64, gamma1: f64, params: &StageParams) -> Self {
        let t = inst.horizon() as f64;
        let a_bar = inst.a_bar();
        let grow = 1.0 + params.eps_x;
        let drift_x = params.eps_x * params.eps_x / (4.0 * t * gamma1);
        let drift_y = params.eps_y * params.eps_y * params.z_r / (4.0 * t * inst.w_bar());
        let steps_before_last = params.t_r as f64 - 1.0;
        let kc = inst.num_resources();
        PotentialState {
            log_phi: vec![-steps_before_last * drift_x; kc],
            log_varphi: vec![-steps_before_last * drift_x; kc],
            log_psi: -steps_before_last * drift_y,
            c1: params.c1k.clone(),
            c2: params.c2,
            upper_target: inst.upper().iter().map(|u| grow * u / t).collect(),
            lower_target: (0..kc)
                .map(|k| a_bar[k] - grow * ((1.0 - epsilon) * t * a_bar[k] - inst.lower()[k]) / t)
                .collect(),
            revenue_target: (1.0 - params.eps_y) * params.z_r / t,
            drift_x,
            drift_y,
        }
    }

    /// Logarithm of the three-family score of serving `(a, w)`.
    pub fn log_score(&self, a: &[f64], w: f64) -> f64 {
        let kc = self.c1.len();
        let mut exps = Vec::with_capacity(2 * kc + 1);
        for k in 0..kc {
            exps.push(self.log_phi[k] + self.c1[k] * (a[k] - self.upper_target[k]));
            exps.push(self.log_varphi[k] + self.c1[k] * (self.lower_target[k] - a[k]));
        }
        exps.push(self.log_psi + self.c2 * (self.revenue_target - w));
        let peak = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        peak + exps.iter().map(|e| (e - peak).exp()).sum::<f64>().ln()
    }

    /// Channel with the smallest score for a type-`ty` request; ties go to
    /// the lowest channel index.
    pub fn choose(&self, inst: &Instance, ty: usize) -> usize {
        let mut best = (0, self.log_score(inst.consumption(0, ty), inst.revenue(0, ty)));
        for i in 1..inst.num_channels() {
            let s = self.log_score(inst.consumption(i, ty), inst.revenue(i, ty));
            if s < best.1 {
                best = (i, s);
            }
        }
        best.0
    }

    pub fn update(&mut self, a: &[f64], w: f64) {
        for k in 0..self.c1.len() {
            self.log_phi[k] += self.c1[k] * (a[k] - self.upper_target[k]) + self.drift_x;
            self.log_varphi[k] += self.c1[k] * (self.lower_target[k] - a[k]) + self.drift_x;
        }
        self.log_psi += self.c2 * (self.revenue_target - w) + self.drift_y;
    }

    /// Adds `shift` to every log-potential (multiplies all potentials by
    /// `e^shift`).
    pub fn rescale(&mut self, shift: f64) {
        self.log_phi.iter_mut().for_each(|v| *v += shift);
        self.log_varphi.iter_mut().for_each(|v| *v += shift);
        self.log_psi += shift;
    }

    pub fn snapshot(&self, step: usize) -> PotentialSnapshot {
        PotentialSnapshot {
            step,
            log_phi: self.log_phi.clone(),
            log_varphi: self.log_varphi.clone(),
            log_psi: self.log_psi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn serve_one() -> Instance {
        Instance::with_service_channels(
            vec![1.0],
            vec![("c1", vec![1.0], vec![vec![1.0]])],
            vec![0.0],
            vec![100.0],
            100,
        )
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn known_optimum_rate() {
        let inst = serve_one();
        let state = PotentialState::for_known_optimum(&inst, 0.5, 100.0);
        assert!((state.c1[0] - 0.693147).abs() < 1e-6);
        assert_eq!(state.c1[0], 2f64.ln());
    }

    #[test]
    fn log_score_matches_direct_sum() {
        let inst = serve_one();
        let mut state = PotentialState::for_known_optimum(&inst, 0.2, 80.0);
        state.log_phi[0] = 0.3;
        state.log_varphi[0] = -1.1;
        state.log_psi = 0.7;
        let (a, w) = ([0.4], 0.9);
        let direct = (0.3 + state.c1[0] * (0.4 - state.upper_target[0])).exp()
            + (-1.1 + state.c1[0] * (state.lower_target[0] - 0.4)).exp()
            + (0.7 + state.c2 * (state.revenue_target - w)).exp();
        assert!((state.log_score(&a, w) - direct.ln()).abs() < 1e-14);
    }

    #[test]
    fn huge_exponents_stay_finite() {
        let inst = serve_one();
        let mut state = PotentialState::for_known_optimum(&inst, 0.2, 80.0);
        state.rescale(5000.0);
        assert!(state.log_score(&[1.0], 1.0).is_finite());
    }

    #[test]
    fn argmin_invariant_under_common_scaling() {
        let inst = serve_one();
        let mut state = PotentialState::for_known_optimum(&inst, 0.3, 90.0);
        state.log_psi = -4.0;
        let before = state.choose(&inst, 0);
        for shift in [-50.0, -1.0, 3.0, 700.0] {
            let mut scaled = state.clone();
            scaled.rescale(shift);
            assert_eq!(scaled.choose(&inst, 0), before);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // Two identical serving channels.
        let inst = Instance::with_service_channels(
            vec![1.0],
            vec![
                ("c1", vec![1.0], vec![vec![1.0]]),
                ("c2", vec![1.0], vec![vec![1.0]]),
            ],
            vec![0.0],
            vec![100.0],
            100,
        );
        let state = PotentialState::for_known_optimum(&inst, 0.1, 100.0);
        assert_eq!(state.choose(&inst, 0), 1);
    }
}
