//! Real standard form `min cᵀx  s.t.  Gx + s = h, Ax = b, s ∈ K` and cone vectors.
//!
//! `K` is a nonnegative orthant times a product of real symmetric PSD cones.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Upper-triangular entries `(r, c, v)` with `r <= c` of a symmetric matrix.
#[derive(Debug, Clone, Default)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..=c {
                let v = if r == c { m[(r, c)] } else { 0.5 * (m[(r, c)] + m[(c, r)]) };
                if v != 0.0 {
                    entries.push((r, c, v));
                }
            }
        }
        SparseSym { entries }
    }

    /// `tr(self * z)` for symmetric `z`.
    pub fn inner(&self, z: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for &(r, c, v) in &self.entries {
            if r == c {
                acc += v * z[(r, r)];
            } else {
                acc += v * (z[(r, c)] + z[(c, r)]);
            }
        }
        acc
    }

    pub fn add_to(&self, alpha: f64, m: &mut DMatrix<f64>) {
        for &(r, c, v) in &self.entries {
            m[(r, c)] += alpha * v;
            if r != c {
                m[(c, r)] += alpha * v;
            }
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|&(r, c, v)| if r == c { v * v } else { 2.0 * v * v }).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for e in &mut self.entries {
            e.2 *= s;
        }
    }
}

/// How a block column was generated.
#[derive(Debug, Clone)]
pub enum ColShape {
    Generic,
    /// `L_g S Lᵀ_g` with `S` given by all of its nonzero entries.
    Congruence { group: usize, local: Vec<(usize, usize, f64)> },
}

#[derive(Debug, Clone)]
pub struct SdpBlock {
    pub dim: usize,
    /// Column of G restricted to this block, per parameter.
    pub cols: Vec<(usize, SparseSym)>,
    pub h: DMatrix<f64>,
    /// Left factors `L_g` referenced by [`ColShape::Congruence`].
    pub groups: Vec<DMatrix<f64>>,
    /// Parallel to `cols`.
    pub shape: Vec<ColShape>,
}

impl SdpBlock {
    pub fn scale_cols(&mut self, s: f64) {
        self.cols.iter_mut().for_each(|(_, g)| g.scale(s));
        for sh in &mut self.shape {
            if let ColShape::Congruence { local, .. } = sh {
                local.iter_mut().for_each(|e| e.2 *= s);
            }
        }
    }
}

/// All nonzero entries of a symmetric matrix.
pub fn full_entries(m: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            if v != 0.0 {
                out.push((r, c, v));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct StdForm {
    pub n: usize,
    pub c: DVector<f64>,
    pub lp_rows: Vec<Vec<(usize, f64)>>,
    pub lp_h: DVector<f64>,
    pub blocks: Vec<SdpBlock>,
    pub a_rows: Vec<Vec<(usize, f64)>>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ConeVec {
    pub lp: DVector<f64>,
    pub sd: Vec<DMatrix<f64>>,
}

impl ConeVec {
    pub fn zeros(f: &StdForm) -> Self {
        ConeVec {
            lp: DVector::zeros(f.lp_rows.len()),
            sd: f.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        }
    }

    pub fn identity(f: &StdForm) -> Self {
        ConeVec {
            lp: DVector::from_element(f.lp_rows.len(), 1.0),
            sd: f.blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim)).collect(),
        }
    }

    pub fn dot(&self, o: &ConeVec) -> f64 {
        self.lp.dot(&o.lp) + self.sd.iter().zip(&o.sd).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn axpy(&mut self, alpha: f64, o: &ConeVec) {
        self.lp.axpy(alpha, &o.lp, 1.0);
        for (a, b) in self.sd.iter_mut().zip(&o.sd) {
            *a += b * alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> ConeVec {
        ConeVec { lp: &self.lp * alpha, sd: self.sd.iter().map(|m| m * alpha).collect() }
    }

    pub fn sub(&self, o: &ConeVec) -> ConeVec {
        let mut r = self.clone();
        r.axpy(-1.0, o);
        r
    }

    /// Smallest `t` with `self + t·e` on the cone boundary, i.e. `-min eig`.
    pub fn max_violation(&self) -> f64 {
        let mut t = f64::NEG_INFINITY;
        for &v in self.lp.iter() {
            t = t.max(-v);
        }
        for m in &self.sd {
            if m.nrows() > 0 {
                t = t.max(-min_eig(m));
            }
        }
        t
    }

    pub fn add_identity(&mut self, t: f64) {
        self.lp.add_scalar_mut(t);
        for m in &mut self.sd {
            for i in 0..m.nrows() {
                m[(i, i)] += t;
            }
        }
    }
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

impl StdForm {
    pub fn degree(&self) -> usize {
        self.lp_rows.len() + self.blocks.iter().map(|b| b.dim).sum::<usize>()
    }

    pub fn gx(&self, x: &DVector<f64>) -> ConeVec {
        let lp = DVector::from_iterator(
            self.lp_rows.len(),
            self.lp_rows.iter().map(|row| row.iter().map(|&(j, g)| g * x[j]).sum::<f64>()),
        );
        let sd = self
            .blocks
            .iter()
            .map(|b| {
                let mut m = DMatrix::zeros(b.dim, b.dim);
                for (p, g) in &b.cols {
                    if x[*p] != 0.0 {
                        g.add_to(x[*p], &mut m);
                    }
                }
                m
            })
            .collect();
        ConeVec { lp, sd }
    }

    pub fn gtz(&self, z: &ConeVec) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (row, &zr) in self.lp_rows.iter().zip(z.lp.iter()) {
            for &(j, g) in row {
                out[j] += g * zr;
            }
        }
        for (b, zm) in self.blocks.iter().zip(&z.sd) {
            for (p, g) in &b.cols {
                out[*p] += g.inner(zm);
            }
        }
        out
    }

    pub fn ax(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.a_rows.len(),
            self.a_rows.iter().map(|row| row.iter().map(|&(j, a)| a * x[j]).sum::<f64>()),
        )
    }

    pub fn aty(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (row, &yr) in self.a_rows.iter().zip(y.iter()) {
            for &(j, a) in row {
                out[j] += a * yr;
            }
        }
        out
    }

    pub fn h(&self) -> ConeVec {
        ConeVec { lp: self.lp_h.clone(), sd: self.blocks.iter().map(|b| b.h.clone()).collect() }
    }
}
