mod common;

use proptest::prelude::*;
use twosided::lp::{solve, LpProblem, LpStatus, RowSense, Sense};

use common::{random_bounded_lp, vertex_optimum};

fn row_activity(lp: &LpProblem, r: usize, x: &[f64]) -> f64 {
    lp.row(r).iter().zip(x).map(|(a, v)| a * v).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_vertex_enumeration(seed in any::<u64>(), n in 2usize..6, m in 1usize..6) {
        let lp = random_bounded_lp(seed, n, m);
        let sol = solve(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let brute = vertex_optimum(&lp).expect("feasible by construction");
        prop_assert!((sol.objective - brute).abs() <= 1e-7, "{} vs {}", sol.objective, brute);
    }

    #[test]
    fn strong_duality_and_complementary_slackness(seed in any::<u64>()) {
        let lp = random_bounded_lp(seed, 5, 5);
        let sol = solve(&lp).unwrap();
        prop_assert!(sol.is_optimal());
        prop_assert!((sol.objective - sol.dual_objective).abs() <= 1e-6);
        // Shadow-price signs: in a maximization, ≤ rows carry y ≥ 0 and ≥ rows
        // y ≤ 0; a minimization flips both.
        let flip = if lp.sense == Sense::Maximize { 1.0 } else { -1.0 };
        for r in 0..lp.num_rows() {
            let y = sol.y[r] * flip;
            match lp.row_senses[r] {
                RowSense::Le => prop_assert!(y >= -1e-9, "row {} y={}", r, sol.y[r]),
                RowSense::Ge => prop_assert!(y <= 1e-9, "row {} y={}", r, sol.y[r]),
                RowSense::Eq => {}
            }
            let gap = row_activity(&lp, r, &sol.x) - lp.rhs[r];
            prop_assert!((sol.y[r] * gap).abs() <= 1e-7, "row {} slackness {}", r, sol.y[r] * gap);
        }
        // Reduced costs c − Aᵀy are ≤ 0 (max) or ≥ 0 (min) and vanish on
        // positive variables.
        for j in 0..lp.num_vars() {
            let d = lp.objective[j]
                - (0..lp.num_rows()).map(|r| sol.y[r] * lp.row(r)[j]).sum::<f64>();
            prop_assert!(d * flip <= 1e-8, "var {} reduced cost {}", j, d);
            prop_assert!((d * sol.x[j]).abs() <= 1e-7);
        }
    }

    #[test]
    fn primal_point_is_feasible(seed in any::<u64>()) {
        let lp = random_bounded_lp(seed, 4, 5);
        let sol = solve(&lp).unwrap();
        for (j, &v) in sol.x.iter().enumerate() {
            prop_assert!(v >= -1e-9, "x[{}] = {}", j, v);
        }
        for r in 0..lp.num_rows() {
            let lhs = row_activity(&lp, r, &sol.x);
            let tol = 1e-8 * (1.0 + lp.rhs[r].abs());
            let ok = match lp.row_senses[r] {
                RowSense::Le => lhs <= lp.rhs[r] + tol,
                RowSense::Ge => lhs >= lp.rhs[r] - tol,
                RowSense::Eq => (lhs - lp.rhs[r]).abs() <= tol,
            };
            prop_assert!(ok, "row {} violated", r);
        }
    }

    #[test]
    fn scaling_the_objective_scales_the_optimum(seed in any::<u64>(), s in 0.1f64..10.0) {
        let lp = random_bounded_lp(seed, 4, 4);
        let mut scaled = lp.clone();
        scaled.objective.iter_mut().for_each(|c| *c *= s);
        let a = solve(&lp).unwrap().objective;
        let b = solve(&scaled).unwrap().objective;
        prop_assert!((b - s * a).abs() <= 1e-7 * (1.0 + b.abs()));
    }
}

#[test]
fn infeasible_when_a_row_is_pushed_past_the_box() {
    // Row 0 caps Σx; adding Σx ≥ cap + 1 empties the region.
    for seed in 0..50 {
        let mut lp = random_bounded_lp(seed, 3, 3);
        let cap = lp.rhs[0];
        let coeffs = lp.row(0).to_vec();
        lp.add_row(coeffs, RowSense::Ge, cap + 1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
        assert!(vertex_optimum(&lp).is_none());
    }
}
