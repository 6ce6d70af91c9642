//! Lowering of a [`ConicProblem`] to the real standard form.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::cone::{full_entries, ColShape, SdpBlock, SparseSym, StdForm};
use crate::embed::{embed_hermitian, unembed_hermitian};
use crate::model::{CMatrix, ConicProblem, ConstraintKind, MatrixTerm, ScalarExpr, ScalarTerm, Value, VarKind};

/// Nonzero entries of the basis matrix of parameter `k`.
pub fn basis(kind: VarKind, k: usize) -> Vec<(usize, usize, Complex64)> {
    let one = Complex64::new(1.0, 0.0);
    match kind {
        VarKind::Free | VarKind::NonNeg => vec![(0, 0, one)],
        VarKind::Symmetric { .. } => {
            let (a, b) = sym_index(k);
            if a == b {
                vec![(a, a, one)]
            } else {
                vec![(a, b, one), (b, a, one)]
            }
        }
        VarKind::Hermitian { .. } => match herm_index(k) {
            HermParam::Diag(a) => vec![(a, a, one)],
            HermParam::Re(a, b) => vec![(a, b, one), (b, a, one)],
            HermParam::Im(a, b) => vec![(a, b, Complex64::new(0.0, 1.0)), (b, a, Complex64::new(0.0, -1.0))],
        },
    }
}

fn sym_index(k: usize) -> (usize, usize) {
    let mut b = ((((8 * k + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
    while b * (b + 1) / 2 > k {
        b -= 1;
    }
    while (b + 1) * (b + 2) / 2 <= k {
        b += 1;
    }
    (k - b * (b + 1) / 2, b)
}

enum HermParam {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

fn herm_index(k: usize) -> HermParam {
    let mut b = (k as f64).sqrt() as usize;
    while b * b > k {
        b -= 1;
    }
    while (b + 1) * (b + 1) <= k {
        b += 1;
    }
    let r = k - b * b;
    if r == 2 * b {
        HermParam::Diag(b)
    } else if r % 2 == 0 {
        HermParam::Re(r / 2, b)
    } else {
        HermParam::Im(r / 2, b)
    }
}

/// Rebuilds a variable value from its parameters.
pub fn unpack(kind: VarKind, p: &[f64]) -> Value {
    match kind {
        VarKind::Free | VarKind::NonNeg => Value::Scalar(p[0]),
        VarKind::Symmetric { dim, .. } | VarKind::Hermitian { dim, .. } => {
            let mut m = CMatrix::zeros(dim, dim);
            for (k, &v) in p.iter().enumerate() {
                for (r, c, e) in basis(kind, k) {
                    m[(r, c)] += e * v;
                }
            }
            Value::Matrix(m)
        }
    }
}

/// Parameters of a value (the Hermitian part for matrices).
pub fn pack(kind: VarKind, v: &Value) -> Vec<f64> {
    match kind {
        VarKind::Free | VarKind::NonNeg => vec![v.scalar()],
        _ => {
            let m = v.matrix();
            (0..kind.param_count())
                .map(|k| match kind {
                    VarKind::Symmetric { .. } => {
                        let (a, b) = sym_index(k);
                        0.5 * (m[(a, b)].re + m[(b, a)].re)
                    }
                    _ => match herm_index(k) {
                        HermParam::Diag(a) => m[(a, a)].re,
                        HermParam::Re(a, b) => 0.5 * (m[(a, b)].re + m[(b, a)].re),
                        HermParam::Im(a, b) => 0.5 * (m[(a, b)].im - m[(b, a)].im),
                    },
                })
                .collect()
        }
    }
}

/// `Re tr(C E_k)`.
fn inner_coef(c: &CMatrix, e: &[(usize, usize, Complex64)]) -> f64 {
    e.iter().map(|&(r, col, v)| (c[(col, r)] * v).re).sum()
}

/// Where a cone row or block of the standard form came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Constraint(usize),
    Domain(usize),
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub form: StdForm,
    pub offsets: Vec<usize>,
    pub objective_constant: f64,
    pub lp_origin: Vec<Origin>,
    pub block_origin: Vec<Origin>,
    /// Whether a block is the real embedding of a complex one.
    pub block_complex: Vec<bool>,
    pub a_origin: Vec<usize>,
    /// Scalings applied by equilibration; all ones when disabled.
    pub lp_scale: Vec<f64>,
    pub block_scale: Vec<f64>,
    pub a_scale: Vec<f64>,
    pub c_scale: f64,
}

fn scalar_row(p: &ConicProblem, offsets: &[usize], e: &ScalarExpr) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for t in &e.terms {
        match t {
            ScalarTerm::Var(v, coef) => *acc.entry(offsets[v.0]).or_default() += coef,
            ScalarTerm::Inner(v, c) => {
                let kind = p.kind(*v);
                for k in 0..kind.param_count() {
                    let val = inner_coef(c, &basis(kind, k));
                    if val != 0.0 {
                        *acc.entry(offsets[v.0] + k).or_default() += val;
                    }
                }
            }
        }
    }
    acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
}

fn is_complex_lmi(p: &ConicProblem, terms: &[MatrixTerm], constant: &CMatrix) -> bool {
    let imag = |m: &CMatrix| m.iter().any(|z| z.im != 0.0);
    imag(constant)
        || terms.iter().any(|t| match t {
            MatrixTerm::Scaled(_, m) => imag(m),
            MatrixTerm::Congruence { var, left, .. } => {
                matches!(p.kind(*var), VarKind::Hermitian { .. }) || imag(left)
            }
        })
}

/// `A + iB ↦ [[A, -B], [B, A]]` for rectangular matrices.
fn to_real_rect(m: &CMatrix, complex: bool) -> DMatrix<f64> {
    if !complex {
        return m.map(|z| z.re);
    }
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i + r, j)] = z.im;
            out[(i, j + c)] = -z.im;
        }
    }
    out
}

fn basis_real(kind: VarKind, k: usize, complex: bool, scale: f64) -> DMatrix<f64> {
    let d = kind.dim();
    let mut e = CMatrix::zeros(d, d);
    for (r, cc, z) in basis(kind, k) {
        e[(r, cc)] = z * scale;
    }
    to_real(&e, complex)
}

fn to_real(m: &CMatrix, complex: bool) -> DMatrix<f64> {
    if complex {
        embed_hermitian(m)
    } else {
        m.map(|z| z.re)
    }
}

pub fn compile(p: &ConicProblem, equilibrate: bool) -> Compiled {
    let mut offsets = Vec::with_capacity(p.variables.len());
    let mut n = 0;
    for v in &p.variables {
        offsets.push(n);
        n += v.kind.param_count();
    }

    let mut c = DVector::zeros(n);
    for (j, v) in scalar_row(p, &offsets, &p.objective) {
        c[j] += v;
    }

    let mut lp_rows = Vec::new();
    let mut lp_h = Vec::new();
    let mut lp_origin = Vec::new();
    let mut blocks = Vec::new();
    let mut block_origin = Vec::new();
    let mut block_complex = Vec::new();
    let mut a_rows = Vec::new();
    let mut b = Vec::new();
    let mut a_origin = Vec::new();

    for (i, v) in p.variables.iter().enumerate() {
        match v.kind {
            VarKind::NonNeg => {
                lp_rows.push(vec![(offsets[i], -1.0)]);
                lp_h.push(0.0);
                lp_origin.push(Origin::Domain(i));
            }
            VarKind::Symmetric { dim, psd: true } | VarKind::Hermitian { dim, psd: true } => {
                let complex = matches!(v.kind, VarKind::Hermitian { .. });
                let rdim = if complex { 2 * dim } else { dim };
                let mut cols = Vec::new();
                let mut shape = Vec::new();
                for k in 0..v.kind.param_count() {
                    let e = basis_real(v.kind, k, complex, -1.0);
                    cols.push((offsets[i] + k, SparseSym::from_dense(&e)));
                    shape.push(ColShape::Congruence { group: 0, local: full_entries(&e) });
                }
                blocks.push(SdpBlock {
                    dim: rdim,
                    cols,
                    h: DMatrix::zeros(rdim, rdim),
                    groups: vec![DMatrix::identity(rdim, rdim)],
                    shape,
                });
                block_origin.push(Origin::Domain(i));
                block_complex.push(complex);
            }
            _ => {}
        }
    }

    for (ci, con) in p.constraints.iter().enumerate() {
        match &con.kind {
            ConstraintKind::Eq { expr, rhs } => {
                a_rows.push(scalar_row(p, &offsets, expr));
                b.push(rhs - expr.constant);
                a_origin.push(ci);
            }
            ConstraintKind::Le { expr, rhs } => {
                lp_rows.push(scalar_row(p, &offsets, expr));
                lp_h.push(rhs - expr.constant);
                lp_origin.push(Origin::Constraint(ci));
            }
            ConstraintKind::Lmi { expr } => {
                let complex = is_complex_lmi(p, &expr.terms, &expr.constant);
                let d = expr.dim;
                let mut images: BTreeMap<usize, CMatrix> = BTreeMap::new();
                // Single congruence source per parameter: (group, var kind, param, scale).
                let mut source: BTreeMap<usize, Option<(usize, VarKind, usize, f64)>> = BTreeMap::new();
                let mut groups = Vec::new();
                for t in &expr.terms {
                    match t {
                        MatrixTerm::Scaled(v, m) => {
                            source.insert(offsets[v.0], None);
                            let e = images.entry(offsets[v.0]).or_insert_with(|| CMatrix::zeros(d, d));
                            *e += m;
                        }
                        MatrixTerm::Congruence { var, left, scale } => {
                            let kind = p.kind(*var);
                            let s = Complex64::new(*scale, 0.0);
                            let g = groups.len();
                            groups.push(to_real_rect(left, complex));
                            for k in 0..kind.param_count() {
                                source
                                    .entry(offsets[var.0] + k)
                                    .and_modify(|e| *e = None)
                                    .or_insert(Some((g, kind, k, *scale)));
                                let e = images.entry(offsets[var.0] + k).or_insert_with(|| CMatrix::zeros(d, d));
                                for (r, cc, z) in basis(kind, k) {
                                    let lr = left.column(r);
                                    let lc = left.column(cc);
                                    for col in 0..d {
                                        let f = s * z * lc[col].conj();
                                        if f == Complex64::new(0.0, 0.0) {
                                            continue;
                                        }
                                        for row in 0..d {
                                            e[(row, col)] += lr[row] * f;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                let mut cols = Vec::new();
                let mut shape = Vec::new();
                for (j, m) in images {
                    let g = SparseSym::from_dense(&-to_real(&m, complex));
                    if g.entries.is_empty() {
                        continue;
                    }
                    shape.push(match source[&j] {
                        Some((grp, kind, k, scale)) => ColShape::Congruence {
                            group: grp,
                            local: full_entries(&basis_real(kind, k, complex, -scale)),
                        },
                        None => ColShape::Generic,
                    });
                    cols.push((j, g));
                }
                let h = to_real(&expr.constant, complex);
                blocks.push(SdpBlock { dim: h.nrows(), cols, h, groups, shape });
                block_origin.push(Origin::Constraint(ci));
                block_complex.push(complex);
            }
        }
    }

    let mut form = StdForm {
        n,
        c,
        lp_rows,
        lp_h: DVector::from_vec(lp_h),
        blocks,
        a_rows,
        b: DVector::from_vec(b),
    };

    let mut lp_scale = vec![1.0; form.lp_rows.len()];
    let mut block_scale = vec![1.0; form.blocks.len()];
    let mut a_scale = vec![1.0; form.a_rows.len()];
    let mut c_scale = 1.0;
    if equilibrate {
        for (r, row) in form.lp_rows.iter_mut().enumerate() {
            let nrm = row.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
            if nrm > 0.0 {
                lp_scale[r] = 1.0 / nrm;
                row.iter_mut().for_each(|e| e.1 /= nrm);
                form.lp_h[r] /= nrm;
            }
        }
        for (r, row) in form.a_rows.iter_mut().enumerate() {
            let nrm = row.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
            if nrm > 0.0 {
                a_scale[r] = 1.0 / nrm;
                row.iter_mut().for_each(|e| e.1 /= nrm);
                form.b[r] /= nrm;
            }
        }
        for (k, blk) in form.blocks.iter_mut().enumerate() {
            let nrm = blk.cols.iter().map(|(_, g)| g.frobenius_sq()).fold(0.0, f64::max).sqrt();
            if nrm > 0.0 {
                block_scale[k] = 1.0 / nrm;
                blk.scale_cols(1.0 / nrm);
                blk.h /= nrm;
            }
        }
        let cmax = form.c.amax();
        if cmax > 0.0 {
            c_scale = 1.0 / cmax;
            form.c *= c_scale;
        }
    }

    Compiled {
        form,
        offsets,
        objective_constant: p.objective.constant,
        lp_origin,
        block_origin,
        block_complex,
        a_origin,
        lp_scale,
        block_scale,
        a_scale,
        c_scale,
    }
}

impl Compiled {
    /// Converts a real block dual to the complex multiplier of the original constraint.
    pub fn block_value(&self, k: usize, z: &DMatrix<f64>) -> CMatrix {
        if self.block_complex[k] {
            unembed_hermitian(z)
        } else {
            z.map(|x| Complex64::new(x, 0.0))
        }
    }

    /// Inverse of [`Compiled::block_value`].
    pub fn block_real(&self, k: usize, z: &CMatrix) -> DMatrix<f64> {
        if self.block_complex[k] {
            embed_hermitian(z) * 0.5
        } else {
            z.map(|x| x.re)
        }
    }
}
