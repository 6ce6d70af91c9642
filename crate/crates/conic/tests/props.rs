mod common;

use common::*;
use conic::{check_kkt, solve, ConicProblem, ScalarExpr, SolveStatus, VarKind};
use proptest::prelude::*;

fn rescaled(p: &ConicProblem, k: f64) -> ConicProblem {
    let mut q = p.clone();
    for c in q.constraints.iter_mut() {
        if let conic::ConstraintKind::Eq { expr, rhs } = &mut c.kind {
            expr.constant *= k;
            for t in expr.terms.iter_mut() {
                match t {
                    conic::ScalarTerm::Var(_, a) => *a *= k,
                    conic::ScalarTerm::Inner(_, m) => *m *= conic::Complex64::new(k, 0.0),
                }
            }
            *rhs *= k;
        }
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn row_scaling_leaves_optimum(seed in 0u64..10_000, dim in 2usize..7, k in 0.1f64..10.0) {
        let m = (dim + 1).min(dim * (dim + 1) / 2 - 1);
        let pl = planted_sdp(seed, dim, m);
        let a = solve(&pl.problem, 1e-8).unwrap();
        let b = solve(&rescaled(&pl.problem, k), 1e-8).unwrap();
        prop_assert_eq!(&a.status, &SolveStatus::Optimal);
        prop_assert_eq!(&b.status, &SolveStatus::Optimal);
        prop_assert!((a.primal_objective - b.primal_objective).abs() <= 1e-6 * (1.0 + a.primal_objective.abs()));
    }

    #[test]
    fn weak_duality_and_kkt(seed in 0u64..10_000, dim in 2usize..8) {
        let m = dim.min(dim * (dim + 1) / 2 - 1);
        let pl = planted_sdp(seed, dim, m);
        let s = solve(&pl.problem, 1e-8).unwrap();
        prop_assert_eq!(&s.status, &SolveStatus::Optimal);
        prop_assert!(s.dual_objective <= s.primal_objective + 1e-7 * (1.0 + s.primal_objective.abs()));
        prop_assert!(check_kkt(&pl.problem, &s).max() < 1e-5);
    }

    #[test]
    fn lp_box_optimum(lo in -5.0f64..0.0, width in 0.1f64..5.0, c in -3.0f64..3.0) {
        prop_assume!(c.abs() > 1e-3);
        let mut p = ConicProblem::new();
        let x = p.add_var("x", VarKind::Free);
        p.set_objective(ScalarExpr::new().var(x, c));
        p.add_le("hi", ScalarExpr::new().var(x, 1.0), lo + width);
        p.add_le("lo", ScalarExpr::new().var(x, -1.0), -lo);
        let s = solve(&p, 1e-8).unwrap();
        let want = if c > 0.0 { c * lo } else { c * (lo + width) };
        prop_assert!((s.primal_objective - want).abs() < 1e-6 * (1.0 + want.abs()));
    }
}
