//! Plain-text dump of problems and solutions for triage.

use std::fmt::Write;

use crate::model::{CMatrix, ConicProblem, ConstraintKind, MatrixTerm, ScalarExpr, ScalarTerm, Solution, Value, VarKind};

fn fmt_matrix(out: &mut String, m: &CMatrix, indent: &str) {
    for i in 0..m.nrows() {
        out.push_str(indent);
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            if z.im == 0.0 {
                let _ = write!(out, " {:.12e}", z.re);
            } else {
                let _ = write!(out, " {:.12e}{:+.12e}i", z.re, z.im);
            }
        }
        out.push('\n');
    }
}

fn fmt_scalar_expr(out: &mut String, e: &ScalarExpr) {
    let _ = writeln!(out, "  constant {:.17e}", e.constant);
    for t in &e.terms {
        match t {
            ScalarTerm::Var(v, c) => {
                let _ = writeln!(out, "  var {} coef {:.17e}", v.0, c);
            }
            ScalarTerm::Inner(v, m) => {
                let _ = writeln!(out, "  var {} inner", v.0);
                fmt_matrix(out, m, "   ");
            }
        }
    }
}

fn kind_str(k: VarKind) -> String {
    match k {
        VarKind::Free => "free".into(),
        VarKind::NonNeg => "nonneg".into(),
        VarKind::Symmetric { dim, psd } => format!("symmetric dim={dim} psd={psd}"),
        VarKind::Hermitian { dim, psd } => format!("hermitian dim={dim} psd={psd}"),
    }
}

pub fn dump_problem(p: &ConicProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "conic-problem v1");
    let _ = writeln!(out, "variables {}", p.variables.len());
    for (i, v) in p.variables.iter().enumerate() {
        let _ = writeln!(out, "var {} {} {}", i, v.name, kind_str(v.kind));
    }
    let _ = writeln!(out, "objective minimize");
    fmt_scalar_expr(&mut out, &p.objective);
    let _ = writeln!(out, "constraints {}", p.constraints.len());
    for (i, c) in p.constraints.iter().enumerate() {
        match &c.kind {
            ConstraintKind::Eq { expr, rhs } => {
                let _ = writeln!(out, "constraint {} [{}] eq rhs {:.17e}", i, c.tag, rhs);
                fmt_scalar_expr(&mut out, expr);
            }
            ConstraintKind::Le { expr, rhs } => {
                let _ = writeln!(out, "constraint {} [{}] le rhs {:.17e}", i, c.tag, rhs);
                fmt_scalar_expr(&mut out, expr);
            }
            ConstraintKind::Lmi { expr } => {
                let _ = writeln!(out, "constraint {} [{}] psd dim {}", i, c.tag, expr.dim);
                let _ = writeln!(out, "  constant");
                fmt_matrix(&mut out, &expr.constant, "   ");
                for t in &expr.terms {
                    match t {
                        MatrixTerm::Scaled(v, m) => {
                            let _ = writeln!(out, "  var {} scaled", v.0);
                            fmt_matrix(&mut out, m, "   ");
                        }
                        MatrixTerm::Congruence { var, left, scale } => {
                            let _ = writeln!(out, "  var {} congruence scale {:.17e}", var.0, scale);
                            fmt_matrix(&mut out, left, "   ");
                        }
                    }
                }
            }
        }
    }
    out
}

fn fmt_value(out: &mut String, v: &Value) {
    match v {
        Value::Scalar(x) => {
            let _ = writeln!(out, " {:.17e}", x);
        }
        Value::Matrix(m) => {
            out.push('\n');
            fmt_matrix(out, m, "   ");
        }
    }
}

pub fn dump_solution(p: &ConicProblem, s: &Solution) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "conic-solution v1");
    let _ = writeln!(out, "status {:?}", s.status);
    let _ = writeln!(out, "primal_objective {:.17e}", s.primal_objective);
    let _ = writeln!(out, "dual_objective {:.17e}", s.dual_objective);
    let _ = writeln!(out, "iterations {}", s.iterations);
    let _ = writeln!(out, "residuals primal {:.3e} dual {:.3e} gap {:.3e}", s.primal_residual, s.dual_residual, s.gap);
    for (i, v) in s.values.iter().enumerate() {
        let _ = write!(out, "value {} {}", i, p.variables.get(i).map_or("?", |x| x.name.as_str()));
        fmt_value(&mut out, v);
    }
    for (i, v) in s.duals.iter().enumerate() {
        let _ = write!(out, "dual {} [{}]", i, p.constraints.get(i).map_or("?", |x| x.tag.as_str()));
        fmt_value(&mut out, v);
    }
    out
}
