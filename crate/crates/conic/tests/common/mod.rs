#![allow(dead_code)]

use conic::{CMatrix, Complex64, ConicProblem, ScalarExpr, Solution, SolveStatus, Value, VarKind};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn real(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = gaussian(rng, n, n);
    (&g + g.transpose()) * 0.5
}

pub fn random_herm(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

/// An SDP in equality form with a planted strictly complementary primal/dual pair.
pub struct Planted {
    pub problem: ConicProblem,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub s: DMatrix<f64>,
    pub objective: f64,
}

pub fn planted_sdp(seed: u64, dim: usize, m: usize) -> Planted {
    let mut r = rng(seed);
    let q = gaussian(&mut r, dim, dim).qr().q();
    let rank = r.random_range(1..dim.max(2)).min(dim - 1).max(1);
    let mut dx = vec![0.0; dim];
    let mut ds = vec![0.0; dim];
    for i in 0..dim {
        if i < rank {
            dx[i] = r.random_range(0.5..2.0);
        } else {
            ds[i] = r.random_range(0.5..2.0);
        }
    }
    let x = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(dx)) * q.transpose();
    let s = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(ds)) * q.transpose();
    let a: Vec<DMatrix<f64>> = (0..m).map(|_| random_sym(&mut r, dim)).collect();
    let y: Vec<f64> = (0..m).map(|_| r.sample(StandardNormal)).collect();
    let mut c = s.clone();
    for (ai, yi) in a.iter().zip(&y) {
        c += ai * *yi;
    }
    let mut p = ConicProblem::new();
    let v = p.add_var("X", VarKind::Symmetric { dim, psd: true });
    p.set_objective(ScalarExpr::new().inner(v, real(&c)));
    for (i, ai) in a.iter().enumerate() {
        p.add_eq(format!("eq{i}"), ScalarExpr::new().inner(v, real(ai)), ai.dot(&x));
    }
    let objective = c.dot(&x);
    Planted { problem: p, x, y, s, objective }
}

impl Planted {
    pub fn solution(&self) -> Solution {
        Solution {
            status: SolveStatus::Optimal,
            primal_objective: self.objective,
            dual_objective: self.objective,
            values: vec![Value::Matrix(real(&self.x))],
            duals: self.y.iter().map(|&v| Value::Scalar(v)).collect(),
            var_duals: vec![Some(Value::Matrix(real(&self.s)))],
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            gap: 0.0,
            reduced_accuracy: false,
        }
    }
}
