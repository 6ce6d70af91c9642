//! Dense interior-point solver for small conic programs.
//!
//! Problems are stated over scalar, real symmetric and complex Hermitian
//! variables with affine equalities, inequalities and linear matrix
//! inequalities. Hermitian data is solved through its real embedding.

mod compile;
mod cone;
pub mod dump;
pub mod embed;
mod error;
mod ipm;
mod kkt;
mod model;
mod solver;

pub use compile::{pack, unpack};
pub use error::ConicError;
pub use kkt::{check_kkt, KktReport};
pub use model::{
    CMatrix, ConicProblem, Constraint, ConstraintId, ConstraintKind, MatrixExpr, MatrixTerm, ScalarExpr, ScalarTerm,
    SolveStatus, Solution, SolverOptions, Value, VarId, VarKind, Variable,
};
pub use solver::{solve, solve_with};

pub use num_complex::Complex64;

/// Smallest eigenvalue of a Hermitian matrix.
pub fn hermitian_min_eig(m: &CMatrix) -> f64 {
    let h = embed::hermitian_part(m);
    nalgebra::SymmetricEigen::new(h).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}
