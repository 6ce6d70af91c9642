//! Residual check computed from the model data alone.

use nalgebra::DVector;

use crate::compile::{compile, pack, Origin};
use crate::cone::{min_eig, ConeVec};
use crate::model::{ConicProblem, Solution, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest violation of an equality, inequality, LMI or variable domain.
    pub primal: f64,
    /// Largest stationarity error or dual cone violation.
    pub dual: f64,
    /// Absolute complementary slackness `Σ ⟨slack, multiplier⟩`.
    pub gap: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

pub fn check_kkt(problem: &ConicProblem, sol: &Solution) -> KktReport {
    let comp = compile(problem, false);
    let f = &comp.form;
    let mut x = DVector::zeros(f.n);
    for (i, v) in problem.variables.iter().enumerate() {
        let p = pack(v.kind, &sol.values[i]);
        x.rows_mut(comp.offsets[i], p.len()).copy_from_slice(&p);
    }
    let y = DVector::from_iterator(f.a_rows.len(), comp.a_origin.iter().map(|&ci| -sol.duals[ci].scalar()));
    let mut z = ConeVec::zeros(f);
    for (k, o) in comp.lp_origin.iter().enumerate() {
        z.lp[k] = match *o {
            Origin::Constraint(ci) => sol.duals[ci].scalar(),
            Origin::Domain(vi) => sol.var_duals[vi].as_ref().map_or(0.0, Value::scalar),
        };
    }
    for (k, o) in comp.block_origin.iter().enumerate() {
        let v = match *o {
            Origin::Constraint(ci) => Some(&sol.duals[ci]),
            Origin::Domain(vi) => sol.var_duals[vi].as_ref(),
        };
        if let Some(v) = v {
            z.sd[k] = comp.block_real(k, v.matrix());
        }
    }

    let mut slack = f.h();
    slack.axpy(-1.0, &f.gx(&x));
    let mut primal = (f.ax(&x) - &f.b).amax();
    for &v in slack.lp.iter() {
        primal = primal.max(-v);
    }
    for m in &slack.sd {
        if m.nrows() > 0 {
            primal = primal.max(-min_eig(m));
        }
    }

    let stat = &f.c + f.aty(&y) + f.gtz(&z);
    let mut dual = stat.amax();
    for &v in z.lp.iter() {
        dual = dual.max(-v);
    }
    for m in &z.sd {
        if m.nrows() > 0 {
            dual = dual.max(-min_eig(m));
        }
    }
    KktReport { primal: primal.max(0.0), dual: dual.max(0.0), gap: slack.dot(&z).abs() }
}
