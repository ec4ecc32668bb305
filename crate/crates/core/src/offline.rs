//! Exact offline oracles.
//!
//! Every policy LP here is indexed by `(channel, type)` with the variable for
//! `x[i][j]` at position `i·J + j`. Resource rows are divided by the total
//! request mass (`T` for the expected problem, `t_r` for sampled ones) so the
//! simplex sees coefficients of order `ā_k` regardless of the horizon.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LpError, LpProblem, LpStatus, RowSense};
use crate::model::{Instance, RequestStream};

/// Maximum number of assignments the integer oracle will enumerate.
pub const ILP_ENUMERATION_BUDGET: f64 = 1e7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OfflineError {
    #[error("{0} is infeasible")]
    Infeasible(String),
    #[error("strong feasibility violated: factor-revealing LP is infeasible")]
    StrongFeasibility,
    #[error("instance too large for enumeration ({0:.3e} assignments)")]
    TooLarge(f64),
    #[error("{0} is unbounded; the LP encoding is wrong")]
    Unbounded(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

pub(crate) enum PolicyObjective {
    /// `max Σ mass_j w_ij x_ij`
    Revenue,
    /// `max ξ`, with the lower rows lifted by `ξ·ā_k` (scaled units).
    Lift,
}

/// A `(channel, type)` policy LP with the row indices needed to read duals.
pub(crate) struct PolicyLp {
    pub problem: LpProblem,
    pub upper_rows: Vec<usize>,
    pub lower_rows: Vec<usize>,
    pub assign_rows: Vec<usize>,
    pub lift_var: Option<usize>,
}

/// Builds `max obj  s.t.  lower_k ≤ Σ mass_j a_ijk x_ij ≤ upper_k,
/// Σ_i x_ij ≤ 1`, with resource rows divided by `scale`.
pub(crate) fn policy_lp(
    inst: &Instance,
    mass: &[f64],
    scale: f64,
    lower: &[f64],
    upper: &[f64],
    objective: PolicyObjective,
) -> PolicyLp {
    let (ic, jc, kc) = (inst.num_channels(), inst.num_types(), inst.num_resources());
    let n_policy = ic * jc;
    let lift = matches!(objective, PolicyObjective::Lift);
    let n = n_policy + usize::from(lift);
    let mut c = vec![0.0; n];
    match objective {
        PolicyObjective::Revenue => {
            for i in 0..ic {
                for j in 0..jc {
                    c[i * jc + j] = mass[j] * inst.revenue(i, j);
                }
            }
        }
        PolicyObjective::Lift => c[n_policy] = 1.0,
    }
    let mut problem = LpProblem::maximize(c);
    let mut upper_rows = Vec::with_capacity(kc);
    let mut lower_rows = Vec::with_capacity(kc);
    for k in 0..kc {
        let mut row = vec![0.0; n];
        for i in 0..ic {
            for j in 0..jc {
                row[i * jc + j] = mass[j] / scale * inst.consumption(i, j)[k];
            }
        }
        upper_rows.push(problem.add_row(row.clone(), RowSense::Le, upper[k] / scale));
        if lift {
            row[n_policy] = -inst.a_bar()[k];
        }
        lower_rows.push(problem.add_row(row, RowSense::Ge, lower[k] / scale));
    }
    let mut assign_rows = Vec::with_capacity(jc);
    for j in 0..jc {
        let entries: Vec<(usize, f64)> = (0..ic).map(|i| (i * jc + j, 1.0)).collect();
        assign_rows.push(problem.add_sparse_row(&entries, RowSense::Le, 1.0));
    }
    PolicyLp {
        problem,
        upper_rows,
        lower_rows,
        assign_rows,
        lift_var: lift.then_some(n_policy),
    }
}

fn unpack_policy(x: &[f64], ic: usize, jc: usize) -> Vec<Vec<f64>> {
    (0..ic)
        .map(|i| (0..jc).map(|j| x[i * jc + j].clamp(0.0, 1.0)).collect())
        .collect()
}

/// Optimum of `E(β)` with its policy and the multipliers of the dual problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedSolution {
    pub beta: f64,
    pub w_beta: f64,
    /// `x_star[i][j]`: fraction of type-`j` requests routed to channel `i`.
    pub x_star: Vec<Vec<f64>>,
    /// Multipliers of the capacity rows (`≥ 0`).
    pub alpha: Vec<f64>,
    /// Multipliers of the (lifted) lower-bound rows (`≥ 0`).
    pub lower_duals: Vec<f64>,
    /// Multipliers of the per-type assignment rows (`≥ 0`).
    pub rho: Vec<f64>,
}

impl ExpectedSolution {
    /// `Σ α U − Σ β (L + βTā) + Σ ρ`, which equals `w_beta` at optimum.
    pub fn dual_value(&self, inst: &Instance) -> f64 {
        let t = inst.horizon() as f64;
        let cap: f64 = self.alpha.iter().zip(inst.upper()).map(|(a, u)| a * u).sum();
        let cover: f64 = (0..inst.num_resources())
            .map(|k| self.lower_duals[k] * (inst.lower()[k] + self.beta * t * inst.a_bar()[k]))
            .sum();
        cap - cover + self.rho.iter().sum::<f64>()
    }

    /// Expected consumption `Σ T p_j a_ijk x_ij` per resource.
    pub fn expected_consumption(&self, inst: &Instance) -> Vec<f64> {
        let t = inst.horizon() as f64;
        (0..inst.num_resources())
            .map(|k| {
                let mut total = 0.0;
                for (i, row) in self.x_star.iter().enumerate() {
                    for (j, x) in row.iter().enumerate() {
                        total += t * inst.probs()[j] * inst.consumption(i, j)[k] * x;
                    }
                }
                total
            })
            .collect()
    }
}

/// Solves the expected problem `E(β)`.
pub fn solve_expected(inst: &Instance, beta: f64) -> Result<ExpectedSolution, OfflineError> {
    let t = inst.horizon() as f64;
    let mass: Vec<f64> = inst.probs().iter().map(|p| t * p).collect();
    let lower: Vec<f64> = inst
        .lower()
        .iter()
        .zip(inst.a_bar())
        .map(|(l, a)| l + beta * t * a)
        .collect();
    let built = policy_lp(inst, &mass, t, &lower, inst.upper(), PolicyObjective::Revenue);
    let sol = lp::solve(&built.problem)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(OfflineError::Infeasible(format!("E({beta})"))),
        LpStatus::Unbounded => return Err(OfflineError::Unbounded(format!("E({beta})"))),
    }
    Ok(ExpectedSolution {
        beta,
        w_beta: sol.objective,
        x_star: unpack_policy(&sol.x, inst.num_channels(), inst.num_types()),
        alpha: built.upper_rows.iter().map(|&r| sol.y[r] / t).collect(),
        lower_duals: built.lower_rows.iter().map(|&r| -sol.y[r] / t).collect(),
        rho: built.assign_rows.iter().map(|&r| sol.y[r]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityMeasure {
    pub xi_star: f64,
    /// A policy attaining the lift `xi_star`.
    pub policy: Vec<Vec<f64>>,
}

/// `min_k (1 − L_k / (T ā_k))`, the largest lift any policy could reach.
pub fn xi_cap(inst: &Instance) -> f64 {
    let t = inst.horizon() as f64;
    inst.lower()
        .iter()
        .zip(inst.a_bar())
        .map(|(l, a)| 1.0 - l / (t * a))
        .fold(f64::INFINITY, f64::min)
}

/// Largest uniform lift `ξ ≥ 0` of the lower bounds keeping the expected
/// problem feasible, solved as a single LP.
pub fn measure_of_feasibility(inst: &Instance) -> Result<FeasibilityMeasure, OfflineError> {
    let t = inst.horizon() as f64;
    let mass: Vec<f64> = inst.probs().iter().map(|p| t * p).collect();
    let built = policy_lp(inst, &mass, t, inst.lower(), inst.upper(), PolicyObjective::Lift);
    let sol = lp::solve(&built.problem)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(OfflineError::Infeasible("measure-of-feasibility LP".into()))
        }
        LpStatus::Unbounded => {
            return Err(OfflineError::Unbounded("measure-of-feasibility LP".into()))
        }
    }
    let lift = built.lift_var.expect("lift LP has a lift variable");
    Ok(FeasibilityMeasure {
        xi_star: sol.x[lift].max(0.0),
        policy: unpack_policy(&sol.x, inst.num_channels(), inst.num_types()),
    })
}

/// `τ = ε / (1 − ε)`.
pub fn tau(epsilon: f64) -> f64 {
    epsilon / (1.0 - epsilon)
}

/// Optimum `t*` of the linear form of the factor-revealing program:
///
/// `min t  s.t.  Σ_i d_ij ≤ t,  Σ d_ij T p_j a_ijk ≤ t U_k,
///  Σ d_ij T p_j a_ijk ≥ t L_k + τ T ā_k,  d ≥ 0`.
///
/// `W_τ ≥ (1 − t*) W_E` holds for every instance where this LP is feasible.
pub fn factor_revealing_t(inst: &Instance, epsilon: f64) -> Result<f64, OfflineError> {
    let (ic, jc, kc) = (inst.num_channels(), inst.num_types(), inst.num_resources());
    let t_h = inst.horizon() as f64;
    let tau = tau(epsilon);
    let n = 1 + ic * jc;
    let d = |i: usize, j: usize| 1 + i * jc + j;
    let mut c = vec![0.0; n];
    c[0] = 1.0;
    let mut problem = LpProblem::minimize(c);
    problem.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
    for j in 0..jc {
        let mut entries: Vec<(usize, f64)> = (0..ic).map(|i| (d(i, j), 1.0)).collect();
        entries.push((0, -1.0));
        problem.add_sparse_row(&entries, RowSense::Le, 0.0);
    }
    for k in 0..kc {
        let mut row = vec![0.0; n];
        for i in 0..ic {
            for j in 0..jc {
                row[d(i, j)] = inst.probs()[j] * inst.consumption(i, j)[k];
            }
        }
        let mut cap = row.clone();
        cap[0] = -inst.upper()[k] / t_h;
        problem.add_row(cap, RowSense::Le, 0.0);
        row[0] = -inst.lower()[k] / t_h;
        problem.add_row(row, RowSense::Ge, tau * inst.a_bar()[k]);
    }
    let sol = lp::solve(&problem)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.x[0]),
        LpStatus::Infeasible => Err(OfflineError::StrongFeasibility),
        LpStatus::Unbounded => Err(OfflineError::Unbounded("factor-revealing LP".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IlpOptimum {
    Optimal { revenue: f64, decisions: Vec<usize> },
    /// No 0/1 assignment meets every two-sided constraint.
    Infeasible,
}

impl IlpOptimum {
    pub fn revenue(&self) -> Option<f64> {
        match self {
            IlpOptimum::Optimal { revenue, .. } => Some(*revenue),
            IlpOptimum::Infeasible => None,
        }
    }
}

/// Exact offline integer optimum over a realized stream by enumerating all
/// `|I|^T` assignments.
pub fn offline_ilp_opt(inst: &Instance, stream: &RequestStream) -> Result<IlpOptimum, OfflineError> {
    let size = (inst.num_channels() as f64).powi(stream.types.len() as i32);
    if size > ILP_ENUMERATION_BUDGET {
        return Err(OfflineError::TooLarge(size));
    }
    struct Search<'a> {
        inst: &'a Instance,
        types: &'a [usize],
        used: Vec<f64>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }
    impl Search<'_> {
        fn go(&mut self, pos: usize, revenue: f64) {
            if pos == self.types.len() {
                let ok = self.used.iter().enumerate().all(|(k, &c)| {
                    let (l, u) = (self.inst.lower()[k], self.inst.upper()[k]);
                    c >= l - 1e-9 * (1.0 + l.abs()) && c <= u + 1e-9 * (1.0 + u.abs())
                });
                if ok && self.best.as_ref().is_none_or(|(b, _)| revenue > *b) {
                    self.best = Some((revenue, self.current.clone()));
                }
                return;
            }
            let ty = self.types[pos];
            for i in 0..self.inst.num_channels() {
                let a = self.inst.consumption(i, ty);
                for (u, v) in self.used.iter_mut().zip(a) {
                    *u += v;
                }
                self.current.push(i);
                self.go(pos + 1, revenue + self.inst.revenue(i, ty));
                self.current.pop();
                for (u, v) in self.used.iter_mut().zip(a) {
                    *u -= v;
                }
            }
        }
    }
    let mut search = Search {
        inst,
        types: &stream.types,
        used: vec![0.0; inst.num_resources()],
        current: Vec::with_capacity(stream.types.len()),
        best: None,
    };
    search.go(0, 0.0);
    Ok(match search.best {
        Some((revenue, decisions)) => IlpOptimum::Optimal { revenue, decisions },
        None => IlpOptimum::Infeasible,
    })
}

/// LP relaxation with one variable per `(channel, request)`:
/// `max Σ w x  s.t.  lower_k ≤ Σ a x ≤ upper_k,  Σ_i x_is ≤ 1`.
pub fn per_request_relaxation(
    inst: &Instance,
    requests: &[usize],
    lower: &[f64],
    upper: &[f64],
) -> Result<f64, OfflineError> {
    let (ic, kc) = (inst.num_channels(), inst.num_resources());
    let s_count = requests.len();
    let var = |i: usize, s: usize| i * s_count + s;
    let mut c = vec![0.0; ic * s_count];
    for i in 0..ic {
        for (s, &ty) in requests.iter().enumerate() {
            c[var(i, s)] = inst.revenue(i, ty);
        }
    }
    let mut problem = LpProblem::maximize(c);
    for k in 0..kc {
        let mut row = vec![0.0; ic * s_count];
        for i in 0..ic {
            for (s, &ty) in requests.iter().enumerate() {
                row[var(i, s)] = inst.consumption(i, ty)[k];
            }
        }
        problem.add_row(row.clone(), RowSense::Le, upper[k]);
        problem.add_row(row, RowSense::Ge, lower[k]);
    }
    for s in 0..s_count {
        let entries: Vec<(usize, f64)> = (0..ic).map(|i| (var(i, s), 1.0)).collect();
        problem.add_sparse_row(&entries, RowSense::Le, 1.0);
    }
    let sol = lp::solve(&problem)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective),
        LpStatus::Infeasible => Err(OfflineError::Infeasible("per-request relaxation".into())),
        LpStatus::Unbounded => Err(OfflineError::Unbounded("per-request relaxation".into())),
    }
}

/// Linear relaxation of the offline integer program on a realized stream.
pub fn sample_relaxation_opt(inst: &Instance, stream: &RequestStream) -> Result<f64, OfflineError> {
    per_request_relaxation(inst, &stream.types, inst.lower(), inst.upper())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub epsilon: f64,
    pub tau: f64,
    pub xi_star: f64,
    pub w_tau: f64,
    pub w_e: f64,
    /// `(1 − τ/ξ*) W_E`
    pub bound: f64,
    pub bound_ok: bool,
}

/// Checks `W_τ ≥ (1 − τ/ξ*) W_E` up to `1e-8·W_E`.
pub fn sensitivity_check(inst: &Instance, epsilon: f64) -> Result<SensitivityReport, OfflineError> {
    let tau = tau(epsilon);
    let xi_star = measure_of_feasibility(inst)?.xi_star;
    let w_e = solve_expected(inst, 0.0)?.w_beta;
    let w_tau = solve_expected(inst, tau)?.w_beta;
    let bound = (1.0 - tau / xi_star) * w_e;
    Ok(SensitivityReport {
        epsilon,
        tau,
        xi_star,
        w_tau,
        w_e,
        bound,
        bound_ok: w_tau >= bound - 1e-8 * w_e.abs(),
    })
}

/// Granularity parameters of the instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub epsilon: f64,
    /// `max_k(ā_k/U_k, ā_k/(Tā_k − L_k), w̄/W_τ)`; `None` if `E(τ)` is infeasible.
    pub gamma: Option<f64>,
    /// `max_k(ā_k/U_k, ā_k/((1−ε)Tā_k − L_k), w̄/W_{ε+τ₁})`; `None` if
    /// `E(ε+τ₁)` is infeasible.
    pub gamma1: Option<f64>,
    /// `gamma1` with the revenue term evaluated at `W_{min(ε+τ₁, ξ*)}`.
    pub gamma1_capped: Option<f64>,
    /// `max_k(ā_k/U_k, ā_k/(Tā_k − L_k))`
    pub gamma2: f64,
    /// `c·ε² / ln(K/ε)`
    pub threshold: f64,
    pub within_regime: bool,
    pub diagnostics: Vec<String>,
}

impl GammaReport {
    /// `gamma1` when defined, otherwise the capped variant.
    pub fn gamma1_effective(&self) -> Option<f64> {
        self.gamma1.or(self.gamma1_capped)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// `τ₁ = √ε / (1 − √ε)`.
pub fn tau1(epsilon: f64) -> f64 {
    let s = epsilon.sqrt();
    s / (1.0 - s)
}

/// Evaluates `γ`, `γ₁` and `γ₂`; `c` scales the regime threshold.
pub fn compute_gammas(inst: &Instance, epsilon: f64, c: f64) -> GammaReport {
    let t = inst.horizon() as f64;
    let kc = inst.num_resources();
    let a_bar = inst.a_bar();
    let cap_term = (0..kc)
        .map(|k| ratio(a_bar[k], inst.upper()[k]))
        .fold(0.0, f64::max);
    let cover = |shrink: f64| {
        (0..kc)
            .map(|k| ratio(a_bar[k], shrink * t * a_bar[k] - inst.lower()[k]))
            .fold(0.0, f64::max)
    };
    let mut diagnostics = Vec::new();
    let mut revenue_term = |lift: f64, label: &str| match solve_expected(inst, lift) {
        Ok(sol) => Some(ratio(inst.w_bar(), sol.w_beta)),
        Err(e) => {
            diagnostics.push(format!("{label}: {e}"));
            None
        }
    };

    let gamma2 = cap_term.max(cover(1.0));
    let gamma = revenue_term(tau(epsilon), "gamma").map(|r| gamma2.max(r));
    let g1_static = cap_term.max(cover(1.0 - epsilon));
    let lift1 = epsilon + tau1(epsilon);
    let gamma1 = revenue_term(lift1, "gamma1").map(|r| g1_static.max(r));
    let gamma1_capped = match gamma1 {
        Some(g) => Some(g),
        None => match measure_of_feasibility(inst) {
            Ok(m) => revenue_term(lift1.min(m.xi_star), "gamma1_capped").map(|r| g1_static.max(r)),
            Err(e) => {
                diagnostics.push(format!("gamma1_capped: {e}"));
                None
            }
        },
    };

    let threshold = c * epsilon * epsilon / (kc as f64 / epsilon).ln();
    let within_regime = [gamma, gamma1, Some(gamma2)]
        .iter()
        .all(|g| matches!(g, Some(v) if *v <= threshold));
    GammaReport {
        epsilon,
        gamma,
        gamma1,
        gamma1_capped,
        gamma2,
        threshold,
        within_regime,
        diagnostics,
    }
}
