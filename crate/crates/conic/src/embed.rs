//! Real symmetric embedding of complex Hermitian matrices.
//!
//! `A + iB ↦ [[A, -B], [B, A]]` preserves positive semidefiniteness; every
//! eigenvalue appears twice.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::model::CMatrix;

pub fn embed_hermitian(m: &CMatrix) -> DMatrix<f64> {
    let n = m.nrows();
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let z = m[(i, j)];
            r[(i, j)] = z.re;
            r[(i + n, j + n)] = z.re;
            r[(i + n, j)] = z.im;
            r[(i, j + n)] = -z.im;
        }
    }
    r
}

/// Adjoint of [`embed_hermitian`] under `⟨X, Y⟩ = tr(XY)` and `Re tr(XY)`.
pub fn unembed_hermitian(r: &DMatrix<f64>) -> CMatrix {
    let n = r.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| {
        Complex64::new(r[(i, j)] + r[(i + n, j + n)], r[(i + n, j)] - r[(i, j + n)])
    })
}

/// Hermitian part `(M + Mᴴ)/2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}
