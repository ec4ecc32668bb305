//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Problems are small (every oracle LP is indexed by channel × request type),
//! so the whole tableau is kept in one row-major `Vec<f64>`.
//!
//! Dual multipliers are reported as shadow prices: `y[r]` is the rate of
//! change of the optimal objective with respect to `rhs[r]`. For a
//! minimization problem this makes `≥` rows nonnegative and `≤` rows
//! nonpositive; for a maximization problem `≤` rows are nonnegative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest magnitude accepted as a pivot element.
pub const PIVOT_TOL: f64 = 1e-9;
/// Reduced costs above `-COST_TOL` count as nonnegative.
const COST_TOL: f64 = 1e-9;
/// Phase-one infeasibility tolerance, relative to `1 + ‖b‖∞`.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    Malformed(String),
    #[error("iteration limit reached after {0} pivots")]
    IterationLimit(usize),
}

/// `opt cᵀx  s.t.  A x (≤,≥,=) b,  lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    /// Row-major, `num_rows × num_vars`.
    pub matrix: Vec<f64>,
    pub row_senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// New problem with every variable bounded to `[0, ∞)`.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            sense,
            objective,
            matrix: Vec::new(),
            row_senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.num_vars();
        &self.matrix[r * n..(r + 1) * n]
    }

    /// Appends a dense row. Panics if the row has the wrong length.
    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> usize {
        assert_eq!(coeffs.len(), self.num_vars(), "row length must equal num_vars");
        self.matrix.extend(coeffs);
        self.row_senses.push(sense);
        self.rhs.push(rhs);
        self.rhs.len() - 1
    }

    /// Appends a row given as `(column, coefficient)` pairs.
    pub fn add_sparse_row(&mut self, entries: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, v) in entries {
            coeffs[j] += v;
        }
        self.add_row(coeffs, sense, rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let m = self.num_rows();
        if self.matrix.len() != n * m || self.row_senses.len() != m {
            return Err(LpError::Malformed("inconsistent dimensions".into()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors must have num_vars entries".into()));
        }
        if self.objective.iter().chain(&self.matrix).chain(&self.rhs).any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite coefficient".into()));
        }
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("invalid bounds on variable {j}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; empty unless `Optimal`.
    pub x: Vec<f64>,
    /// One shadow price per constraint row; empty unless `Optimal`.
    pub y: Vec<f64>,
    pub objective: f64,
    /// Dual objective assembled from `y` and the variable bounds.
    pub dual_objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        LpSolution {
            status,
            x: Vec::new(),
            y: Vec::new(),
            objective: f64::NAN,
            dual_objective: f64::NAN,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// How an original variable maps onto nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + sign·col`
    Single { col: usize, offset: f64, sign: f64 },
    /// `x = pos − neg`
    Free { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows × (cols + 1)`, last entry of each row is the basic value.
    data: Vec<f64>,
    /// Reduced costs, `cols + 1` entries (last is `-objective`).
    cost: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let width = self.cols + 1;
        let piv = self.at(pr, pc);
        let prow_start = pr * width;
        for c in 0..width {
            self.data[prow_start + c] /= piv;
        }
        let prow: Vec<f64> = self.data[prow_start..prow_start + width].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let factor = self.data[r * width + pc];
            if factor != 0.0 {
                let row = &mut self.data[r * width..(r + 1) * width];
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= factor * p;
                }
                row[pc] = 0.0;
            }
        }
        let factor = self.cost[pc];
        if factor != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&prow) {
                *v -= factor * p;
            }
            self.cost[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Rebuilds the reduced-cost row for column costs `c` and the current basis.
    fn price(&mut self, c: &[f64]) {
        let mut cost = c.to_vec();
        cost.push(0.0);
        for r in 0..self.rows {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                let row = &self.data[r * (self.cols + 1)..(r + 1) * (self.cols + 1)];
                for (v, a) in cost.iter_mut().zip(row) {
                    *v -= cb * a;
                }
            }
        }
        self.cost = cost;
    }

    /// Bland's rule simplex on the current cost row. Returns `false` on
    /// unboundedness.
    fn run(&mut self, barred: &[bool], iterations: &mut usize, limit: usize) -> Result<bool, LpError> {
        loop {
            let entering = (0..self.cols).find(|&c| !barred[c] && self.cost[c] < -COST_TOL);
            let Some(pc) = entering else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                            if (!tie && ratio < bratio) || (tie && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = best else {
                return Ok(false);
            };
            *iterations += 1;
            if *iterations > limit {
                return Err(LpError::IterationLimit(*iterations - 1));
            }
            self.pivot(pr, pc);
        }
    }
}

/// Solves `problem`. Infeasible and unbounded problems are reported through
/// [`LpSolution::status`]; only malformed input and pivot exhaustion are
/// errors.
pub fn solve(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.check()?;
    let n = problem.num_vars();
    let m = problem.num_rows();

    // Map variables onto nonnegative columns.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (problem.lower[j], problem.upper[j]);
        if lo.is_finite() {
            maps.push(VarMap::Single { col: ncols, offset: lo, sign: 1.0 });
            if hi.is_finite() {
                bound_rows.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Single { col: ncols, offset: hi, sign: -1.0 });
            ncols += 1;
        } else {
            maps.push(VarMap::Free { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }
    for &(_, width) in &bound_rows {
        if width < 0.0 {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
        }
    }

    // Structural rows in column space, followed by the upper-bound rows.
    let total_rows = m + bound_rows.len();
    let mut a_rows = vec![0.0; total_rows * ncols];
    let mut b = vec![0.0; total_rows];
    let mut senses = Vec::with_capacity(total_rows);
    for r in 0..m {
        let row = problem.row(r);
        let mut rhs = problem.rhs[r];
        for (j, map) in maps.iter().enumerate() {
            let v = row[j];
            if v == 0.0 {
                continue;
            }
            match *map {
                VarMap::Single { col, offset, sign } => {
                    a_rows[r * ncols + col] = sign * v;
                    rhs -= v * offset;
                }
                VarMap::Free { pos, neg } => {
                    a_rows[r * ncols + pos] = v;
                    a_rows[r * ncols + neg] = -v;
                }
            }
        }
        b[r] = rhs;
        senses.push(problem.row_senses[r]);
    }
    for (q, &(col, width)) in bound_rows.iter().enumerate() {
        a_rows[(m + q) * ncols + col] = 1.0;
        b[m + q] = width;
        senses.push(RowSense::Le);
    }

    // Internal form is a minimization with b ≥ 0.
    let obj_sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut c_struct = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        let cj = obj_sign * problem.objective[j];
        match *map {
            VarMap::Single { col, sign, .. } => {
                c_struct[col] = sign * cj;
            }
            VarMap::Free { pos, neg } => {
                c_struct[pos] = cj;
                c_struct[neg] = -cj;
            }
        }
    }
    let mut row_flip = vec![1.0; total_rows];
    for r in 0..total_rows {
        if b[r] < 0.0 {
            row_flip[r] = -1.0;
            b[r] = -b[r];
            for v in &mut a_rows[r * ncols..(r + 1) * ncols] {
                *v = -*v;
            }
            senses[r] = match senses[r] {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
    }

    // Column layout: structural | slack/surplus | artificial.
    let n_slack = senses.iter().filter(|s| **s != RowSense::Eq).count();
    let n_art = senses.iter().filter(|s| **s != RowSense::Le).count();
    let cols = ncols + n_slack + n_art;
    let width = cols + 1;
    let mut data = vec![0.0; total_rows * width];
    let mut basis = vec![0usize; total_rows];
    let mut unit_col = vec![0usize; total_rows];
    let mut is_art = vec![false; cols];
    let (mut next_slack, mut next_art) = (ncols, ncols + n_slack);
    for r in 0..total_rows {
        let row = &mut data[r * width..(r + 1) * width];
        row[..ncols].copy_from_slice(&a_rows[r * ncols..(r + 1) * ncols]);
        row[cols] = b[r];
        match senses[r] {
            RowSense::Le => {
                row[next_slack] = 1.0;
                basis[r] = next_slack;
                unit_col[r] = next_slack;
                next_slack += 1;
            }
            RowSense::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                basis[r] = next_art;
                unit_col[r] = next_art;
                is_art[next_art] = true;
                next_art += 1;
            }
            RowSense::Eq => {
                row[next_art] = 1.0;
                basis[r] = next_art;
                unit_col[r] = next_art;
                is_art[next_art] = true;
                next_art += 1;
            }
        }
    }

    let mut tab = Tableau {
        rows: total_rows,
        cols,
        data,
        cost: Vec::new(),
        basis,
    };
    let limit = 50_000 + 50 * (total_rows + cols);
    let mut iterations = 0usize;
    let b_norm = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

    // Phase one.
    if n_art > 0 {
        let phase1_cost: Vec<f64> = (0..cols).map(|c| if is_art[c] { 1.0 } else { 0.0 }).collect();
        tab.price(&phase1_cost);
        let no_bar = vec![false; cols];
        tab.run(&no_bar, &mut iterations, limit)?;
        let infeasibility: f64 = (0..total_rows)
            .filter(|&r| is_art[tab.basis[r]])
            .map(|r| tab.rhs(r))
            .sum();
        if infeasibility > FEAS_TOL * (1.0 + b_norm) {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, iterations));
        }
        // Drive zero-valued artificials out of the basis where possible.
        for r in 0..total_rows {
            if is_art[tab.basis[r]] {
                if let Some(pc) = (0..cols).find(|&c| !is_art[c] && tab.at(r, c).abs() > PIVOT_TOL) {
                    tab.pivot(r, pc);
                }
            }
        }
    }

    // Phase two.
    let mut phase2_cost = vec![0.0; cols];
    phase2_cost[..ncols].copy_from_slice(&c_struct);
    tab.price(&phase2_cost);
    if !tab.run(&is_art, &mut iterations, limit)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, iterations));
    }

    let mut col_vals = vec![0.0; cols];
    for r in 0..total_rows {
        col_vals[tab.basis[r]] = tab.rhs(r);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Single { col, offset, sign } => offset + sign * col_vals[col],
            VarMap::Free { pos, neg } => col_vals[pos] - col_vals[neg],
        })
        .collect();
    // Internal multipliers: reduced cost of a row's unit column is −y_int.
    let y: Vec<f64> = (0..m)
        .map(|r| {
            let y_int = -tab.cost[unit_col[r]];
            obj_sign * row_flip[r] * y_int
        })
        .collect();
    let objective: f64 = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let dual_objective = dual_objective(problem, &y);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        y,
        objective,
        dual_objective,
        iterations,
    })
}

/// `bᵀy` plus the bound terms implied by the reduced costs `c − Aᵀy`.
/// Returns ±∞ when a reduced cost pushes against an infinite bound.
fn dual_objective(problem: &LpProblem, y: &[f64]) -> f64 {
    let n = problem.num_vars();
    let mut reduced = problem.objective.clone();
    for (r, &yr) in y.iter().enumerate() {
        if yr != 0.0 {
            for (d, a) in reduced.iter_mut().zip(problem.row(r)) {
                *d -= yr * a;
            }
        }
    }
    let mut total: f64 = problem.rhs.iter().zip(y).map(|(b, y)| b * y).sum();
    for j in 0..n {
        let d = reduced[j];
        if d.abs() <= COST_TOL {
            continue;
        }
        // For a maximization, a positive reduced cost binds at the upper bound.
        let at_upper = match problem.sense {
            Sense::Maximize => d > 0.0,
            Sense::Minimize => d < 0.0,
        };
        let bound = if at_upper { problem.upper[j] } else { problem.lower[j] };
        total += d * bound;
    }
    total
}
