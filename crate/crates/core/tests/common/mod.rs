//! Independent oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twosided::estimators::StageParams;
use twosided::lp::{LpProblem, RowSense, Sense};
use twosided::model::Instance;
use twosided::online::{PotentialSnapshot, RunTrace};

/// Random LP over `x ≥ 0` that is feasible (a random point satisfies every
/// row) and bounded (row 0 has strictly positive coefficients and a `≤`
/// sense). Some rows are tight at that point, so degenerate vertices occur.
pub fn random_bounded_lp(seed: u64, n: usize, m: usize) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) })
        .collect();
    let objective: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut lp = if rng.gen_bool(0.5) {
        LpProblem::maximize(objective)
    } else {
        LpProblem::minimize(objective)
    };
    for r in 0..m {
        let coeffs: Vec<f64> = if r == 0 {
            (0..n).map(|_| rng.gen_range(0.1..1.0)).collect()
        } else {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let at_x0: f64 = coeffs.iter().zip(&x0).map(|(a, x)| a * x).sum();
        let slack = if rng.gen_bool(0.7) { rng.gen_range(0.0..1.0) } else { 0.0 };
        let (sense, rhs) = if r == 0 {
            (RowSense::Le, at_x0 + slack)
        } else {
            match rng.gen_range(0..20) {
                0..=2 => (RowSense::Eq, at_x0),
                3..=10 => (RowSense::Ge, at_x0 - slack),
                _ => (RowSense::Le, at_x0 + slack),
            }
        };
        lp.add_row(coeffs, sense, rhs);
    }
    lp
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Best objective over all basic feasible points of an LP on `x ≥ 0`.
/// `None` when no vertex is feasible.
pub fn vertex_optimum(lp: &LpProblem) -> Option<f64> {
    let n = lp.num_vars();
    let m = lp.num_rows();
    // Constraint c < m is row c; constraint m + j is x_j ≥ 0.
    let constraint = |c: usize| -> (Vec<f64>, f64) {
        if c < m {
            (lp.row(c).to_vec(), lp.rhs[c])
        } else {
            let mut e = vec![0.0; n];
            e[c - m] = 1.0;
            (e, 0.0)
        }
    };
    let feasible = |x: &[f64]| {
        x.iter().all(|&v| v >= -1e-9)
            && (0..m).all(|r| {
                let lhs: f64 = lp.row(r).iter().zip(x).map(|(a, v)| a * v).sum();
                let tol = 1e-9 * (1.0 + lp.rhs[r].abs());
                match lp.row_senses[r] {
                    RowSense::Le => lhs <= lp.rhs[r] + tol,
                    RowSense::Ge => lhs >= lp.rhs[r] - tol,
                    RowSense::Eq => (lhs - lp.rhs[r]).abs() <= tol,
                }
            })
    };
    let mut best: Option<f64> = None;
    for active in subsets(m + n, n) {
        let (a, b): (Vec<Vec<f64>>, Vec<f64>) = active.iter().map(|&c| constraint(c)).unzip();
        let Some(x) = solve_square(a, b) else { continue };
        if !feasible(&x) {
            continue;
        }
        let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        best = Some(match (best, lp.sense) {
            (None, _) => value,
            (Some(b), Sense::Maximize) => b.max(value),
            (Some(b), Sense::Minimize) => b.min(value),
        });
    }
    best
}

/// A positive number held as `mantissa · 2^exp`, multiplied one factor at a
/// time. Rescaling by powers of two is exact, so long products neither
/// overflow nor lose more than one rounding per factor.
#[derive(Clone, Copy, Debug)]
pub struct ScaledProduct {
    mantissa: f64,
    exp: i64,
}

impl ScaledProduct {
    pub fn from_ln(ln: f64) -> Self {
        let shift = (ln / std::f64::consts::LN_2).floor();
        ScaledProduct {
            mantissa: (ln - shift * std::f64::consts::LN_2).exp(),
            exp: shift as i64,
        }
    }

    pub fn times_exp(&mut self, x: f64) {
        let f = Self::from_ln(x);
        self.mantissa *= f.mantissa;
        self.exp += f.exp;
        while self.mantissa >= 2.0 {
            self.mantissa /= 2.0;
            self.exp += 1;
        }
        while self.mantissa < 1.0 {
            self.mantissa *= 2.0;
            self.exp -= 1;
        }
    }

    pub fn ln(&self) -> f64 {
        self.mantissa.ln() + self.exp as f64 * std::f64::consts::LN_2
    }
}

/// Per-step targets and rates, rebuilt from the instance and the run
/// parameters rather than taken from the implementation's state.
pub struct Targets {
    pub c1: Vec<f64>,
    pub c2: f64,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub revenue: f64,
    pub drift_x: f64,
    pub drift_y: f64,
    pub init_x: f64,
    pub init_y: f64,
}

impl Targets {
    pub fn known_optimum(inst: &Instance, eps: f64, w_tau: f64) -> Self {
        let t = inst.horizon() as f64;
        let kc = inst.num_resources();
        let c = -(1.0 - eps).ln();
        Targets {
            c1: (0..kc).map(|k| c / inst.a_bar()[k]).collect(),
            c2: c / inst.w_bar(),
            upper: (0..kc).map(|k| inst.upper()[k] / t).collect(),
            lower: (0..kc).map(|k| inst.lower()[k] / t).collect(),
            revenue: (1.0 - 2.0 * eps) * w_tau / t,
            drift_x: 0.0,
            drift_y: 0.0,
            init_x: 0.0,
            init_y: 0.0,
        }
    }

    /// Stage targets; the coverage family is written in terms of
    /// `a_k = ā_k − Z_k`, i.e. exponent `c1(ā_k − a_k − target_k)`.
    pub fn stage(inst: &Instance, eps: f64, gamma1: f64, p: &StageParams) -> Self {
        let t = inst.horizon() as f64;
        let kc = inst.num_resources();
        let a_bar = inst.a_bar();
        let w_bar = inst.w_bar();
        let dx = p.eps_x * p.eps_x / (4.0 * t * gamma1);
        let dy = p.eps_y * p.eps_y * p.z_r / (4.0 * t * w_bar);
        Targets {
            c1: (0..kc).map(|k| (1.0 + p.eps_x).ln() / a_bar[k]).collect(),
            c2: (1.0 + p.eps_y).ln() / w_bar,
            upper: (0..kc).map(|k| (1.0 + p.eps_x) * inst.upper()[k] / t).collect(),
            lower: (0..kc)
                .map(|k| {
                    a_bar[k] - (1.0 + p.eps_x) * ((1.0 - eps) * t * a_bar[k] - inst.lower()[k]) / t
                })
                .collect(),
            revenue: (1.0 - p.eps_y) * p.z_r / t,
            drift_x: dx,
            drift_y: dy,
            init_x: -(p.t_r as f64 - 1.0) * dx,
            init_y: -(p.t_r as f64 - 1.0) * dy,
        }
    }
}

/// Replays one served segment. Checks that every decision attains the
/// minimal score (ties to the lowest index) and that every recorded
/// potential matches the independently accumulated product.
///
/// Returns the number of verified steps.
pub fn replay_segment(
    inst: &Instance,
    types: &[usize],
    decisions: &[usize],
    targets: &Targets,
    snapshots: Option<&[PotentialSnapshot]>,
) -> Result<usize, String> {
    let kc = inst.num_resources();
    let mut phi = vec![ScaledProduct::from_ln(targets.init_x); kc];
    let mut varphi = vec![ScaledProduct::from_ln(targets.init_x); kc];
    let mut psi = ScaledProduct::from_ln(targets.init_y);
    for (s, (&ty, &chosen)) in types.iter().zip(decisions).enumerate() {
        let score = |i: usize| -> f64 {
            let a = inst.consumption(i, ty);
            let w = inst.revenue(i, ty);
            let mut terms = Vec::with_capacity(2 * kc + 1);
            for k in 0..kc {
                terms.push(phi[k].ln() + targets.c1[k] * (a[k] - targets.upper[k]));
                terms.push(varphi[k].ln() + targets.c1[k] * (targets.lower[k] - a[k]));
            }
            terms.push(psi.ln() + targets.c2 * (targets.revenue - w));
            let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
        };
        let scores: Vec<f64> = (0..inst.num_channels()).map(score).collect();
        let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * best.abs().max(1.0);
        if scores[chosen] > best + tol {
            return Err(format!(
                "step {s}: channel {chosen} scores {} but the minimum is {best}",
                scores[chosen]
            ));
        }
        for i in 0..chosen {
            let same = inst.consumption(i, ty) == inst.consumption(chosen, ty)
                && inst.revenue(i, ty) == inst.revenue(chosen, ty);
            if same || scores[i] < scores[chosen] - tol {
                return Err(format!("step {s}: lower index {i} should have been chosen over {chosen}"));
            }
        }
        let a = inst.consumption(chosen, ty);
        let w = inst.revenue(chosen, ty);
        for k in 0..kc {
            phi[k].times_exp(targets.c1[k] * (a[k] - targets.upper[k]) + targets.drift_x);
            varphi[k].times_exp(targets.c1[k] * (targets.lower[k] - a[k]) + targets.drift_x);
        }
        psi.times_exp(targets.c2 * (targets.revenue - w) + targets.drift_y);
        if let Some(snaps) = snapshots {
            let snap = &snaps[s];
            let close = |got: f64, want: f64| (got - want).abs() <= 1e-10 * want.abs().max(1.0);
            for k in 0..kc {
                if !close(snap.log_phi[k], phi[k].ln()) || !close(snap.log_varphi[k], varphi[k].ln()) {
                    return Err(format!("step {s}: resource {k} potentials diverge"));
                }
            }
            if !close(snap.log_psi, psi.ln()) {
                return Err(format!("step {s}: revenue potential diverges"));
            }
        }
    }
    Ok(types.len())
}

/// Replays every served stage of a staged run.
pub fn replay_staged(
    inst: &Instance,
    types: &[usize],
    trace: &RunTrace,
    eps: f64,
    gamma1: f64,
    check_potentials: bool,
) -> Result<usize, String> {
    let mut verified = 0;
    let mut snap_offset = 0;
    for rec in &trace.stages {
        let targets = Targets::stage(inst, eps, gamma1, &rec.params);
        let len = rec.end - rec.start;
        let snaps = check_potentials.then(|| &trace.potentials[snap_offset..snap_offset + len]);
        verified += replay_segment(
            inst,
            &types[rec.start..rec.end],
            &trace.outcome.decisions[rec.start..rec.end],
            &targets,
            snaps,
        )
        .map_err(|e| format!("stage {}: {e}", rec.r))?;
        snap_offset += len;
    }
    Ok(verified)
}
