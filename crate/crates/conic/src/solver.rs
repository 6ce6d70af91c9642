use nalgebra::DVector;

use crate::compile::{compile, unpack, Compiled, Origin};
use crate::cone::ConeVec;
use crate::error::ConicError;
use crate::ipm::{self, RawStatus};
use crate::model::{ConicProblem, ConstraintKind, SolveStatus, Solution, SolverOptions, Value, VarKind};

/// Solves `problem` with the default options at tolerance `tol`.
pub fn solve(problem: &ConicProblem, tol: f64) -> Result<Solution, ConicError> {
    solve_with(problem, &SolverOptions::with_tol(tol))
}

pub fn solve_with(problem: &ConicProblem, opts: &SolverOptions) -> Result<Solution, ConicError> {
    if !(opts.tol > 1e-12 && opts.tol < 1e-2) {
        return Err(ConicError::Tolerance(opts.tol));
    }
    problem.validate()?;
    let comp = compile(problem, opts.equilibrate);
    let raw = ipm::solve(&comp.form, opts);

    let status = match &raw.status {
        RawStatus::Optimal | RawStatus::OptimalReduced => SolveStatus::Optimal,
        RawStatus::PrimalInfeasible => SolveStatus::Infeasible,
        RawStatus::DualInfeasible => SolveStatus::Unbounded,
        RawStatus::Failure(m) => SolveStatus::NumericalFailure(m.clone()),
    };
    let values = problem
        .variables
        .iter()
        .zip(&comp.offsets)
        .map(|(v, &o)| unpack(v.kind, &raw.x.as_slice()[o..o + v.kind.param_count()]))
        .collect();
    let (duals, var_duals) = map_duals(problem, &comp, &raw.y, &raw.z);
    let cs = comp.c_scale;
    Ok(Solution {
        status,
        primal_objective: raw.pcost / cs + comp.objective_constant,
        dual_objective: raw.dcost / cs + comp.objective_constant,
        values,
        duals,
        var_duals,
        iterations: raw.iterations,
        primal_residual: raw.pres,
        dual_residual: raw.dres,
        gap: raw.gap,
        reduced_accuracy: raw.status == RawStatus::OptimalReduced,
    })
}

fn map_duals(
    problem: &ConicProblem,
    comp: &Compiled,
    y: &DVector<f64>,
    z: &ConeVec,
) -> (Vec<Value>, Vec<Option<Value>>) {
    let cs = comp.c_scale;
    let mut duals: Vec<Value> = problem
        .constraints
        .iter()
        .map(|c| match &c.kind {
            ConstraintKind::Lmi { expr } => Value::Matrix(crate::model::CMatrix::zeros(expr.dim, expr.dim)),
            _ => Value::Scalar(0.0),
        })
        .collect();
    let mut var_duals: Vec<Option<Value>> = problem
        .variables
        .iter()
        .map(|v| match v.kind {
            VarKind::NonNeg => Some(Value::Scalar(0.0)),
            VarKind::Symmetric { dim, psd: true } | VarKind::Hermitian { dim, psd: true } => {
                Some(Value::Matrix(crate::model::CMatrix::zeros(dim, dim)))
            }
            _ => None,
        })
        .collect();
    for (k, &ci) in comp.a_origin.iter().enumerate() {
        if k < y.len() {
            duals[ci] = Value::Scalar(-y[k] * comp.a_scale[k] / cs);
        }
    }
    for (k, origin) in comp.lp_origin.iter().enumerate() {
        let v = Value::Scalar(z.lp[k] * comp.lp_scale[k] / cs);
        match *origin {
            Origin::Constraint(ci) => duals[ci] = v,
            Origin::Domain(vi) => var_duals[vi] = Some(v),
        }
    }
    for (k, origin) in comp.block_origin.iter().enumerate() {
        let zr = &z.sd[k] * (comp.block_scale[k] / cs);
        let v = Value::Matrix(comp.block_value(k, &zr));
        match *origin {
            Origin::Constraint(ci) => duals[ci] = v,
            Origin::Domain(vi) => var_duals[vi] = Some(v),
        }
    }
    (duals, var_duals)
}
