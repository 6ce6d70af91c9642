//! Homogeneous self-dual interior-point iteration with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use crate::cone::{ColShape, ConeVec, SdpBlock, StdForm};
use crate::model::SolverOptions;

#[derive(Debug, Clone, PartialEq)]
pub enum RawStatus {
    Optimal,
    /// Stalled within `REDUCED_FACTOR` of the tolerances.
    OptimalReduced,
    PrimalInfeasible,
    DualInfeasible,
    Failure(String),
}

#[derive(Debug, Clone)]
pub struct RawResult {
    pub status: RawStatus,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: ConeVec,
    pub iterations: usize,
    pub pres: f64,
    pub dres: f64,
    pub gap: f64,
    pub pcost: f64,
    pub dcost: f64,
}

/// Residuals within this multiple of the tolerances are accepted after a stall.
const REDUCED_FACTOR: f64 = 100.0;

fn or_best(best: &mut Option<(f64, RawResult)>, r: RawResult) -> RawResult {
    match best.take() {
        Some((_, b)) => RawResult { iterations: r.iterations, ..b },
        None => r,
    }
}

struct Scaling {
    d: DVector<f64>,
    lam_lp: DVector<f64>,
    r: Vec<DMatrix<f64>>,
    p: Vec<DMatrix<f64>>,
    rrt: Vec<DMatrix<f64>>,
    rinv: Vec<DMatrix<f64>>,
    lam_sd: Vec<DVector<f64>>,
}

impl Scaling {
    fn identity(f: &StdForm) -> Self {
        let l = f.lp_rows.len();
        let eye = |n: usize| DMatrix::identity(n, n);
        Scaling {
            d: DVector::from_element(l, 1.0),
            lam_lp: DVector::from_element(l, 1.0),
            r: f.blocks.iter().map(|b| eye(b.dim)).collect(),
            p: f.blocks.iter().map(|b| eye(b.dim)).collect(),
            rrt: f.blocks.iter().map(|b| eye(b.dim)).collect(),
            rinv: f.blocks.iter().map(|b| eye(b.dim)).collect(),
            lam_sd: f.blocks.iter().map(|b| DVector::from_element(b.dim, 1.0)).collect(),
        }
    }

    fn compute(s: &ConeVec, z: &ConeVec) -> Result<Self, String> {
        let mut d = DVector::zeros(s.lp.len());
        let mut lam_lp = DVector::zeros(s.lp.len());
        for i in 0..s.lp.len() {
            let (si, zi) = (s.lp[i], z.lp[i]);
            if !(si > 0.0 && zi > 0.0) {
                return Err("orthant iterate left the cone interior".into());
            }
            d[i] = (si / zi).sqrt();
            lam_lp[i] = (si * zi).sqrt();
        }
        let mut r = Vec::with_capacity(s.sd.len());
        let mut p = Vec::with_capacity(s.sd.len());
        let mut rrt = Vec::with_capacity(s.sd.len());
        let mut rinvs = Vec::with_capacity(s.sd.len());
        let mut lam_sd = Vec::with_capacity(s.sd.len());
        for (sm, zm) in s.sd.iter().zip(&z.sd) {
            let ls = Cholesky::new(symmetrize(sm))
                .ok_or("loss of positive definiteness in primal scaling block")?
                .l();
            let lz = Cholesky::new(symmetrize(zm))
                .ok_or("loss of positive definiteness in dual scaling block")?
                .l();
            let svd = SVD::new(lz.transpose() * &ls, true, true);
            let u = svd.u.ok_or("svd failed")?;
            let vt = svd.v_t.ok_or("svd failed")?;
            let sv = svd.singular_values;
            if sv.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err("degenerate scaling point".into());
            }
            let isq = sv.map(|x| 1.0 / x.sqrt());
            let rb = &ls * vt.transpose() * DMatrix::from_diagonal(&isq);
            let rinv = DMatrix::from_diagonal(&isq) * u.transpose() * lz.transpose();
            p.push(rinv.transpose() * &rinv);
            rrt.push(&rb * rb.transpose());
            r.push(rb);
            rinvs.push(rinv);
            lam_sd.push(sv);
        }
        Ok(Scaling { d, lam_lp, r, p, rrt, rinv: rinvs, lam_sd })
    }

    /// `W u`: z-type to scaled coordinates.
    fn w(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lp: u.lp.component_mul(&self.d),
            sd: self.r.iter().zip(&u.sd).map(|(r, m)| r.transpose() * m * r).collect(),
        }
    }

    /// `Wᵀ u`: scaled coordinates to s-type.
    fn wt(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lp: u.lp.component_mul(&self.d),
            sd: self.r.iter().zip(&u.sd).map(|(r, m)| r * m * r.transpose()).collect(),
        }
    }

    /// `W⁻ᵀ u`: s-type to scaled coordinates.
    fn wt_inv(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lp: u.lp.component_div(&self.d),
            sd: self.rinv.iter().zip(&u.sd).map(|(r, m)| r * m * r.transpose()).collect(),
        }
    }

    /// `(WᵀW)⁻¹ u`.
    fn qinv(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lp: u.lp.zip_map(&self.d, |a, d| a / (d * d)),
            sd: self.p.iter().zip(&u.sd).map(|(p, m)| p * m * p).collect(),
        }
    }

    /// `WᵀW u`.
    fn q(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lp: u.lp.zip_map(&self.d, |a, d| a * d * d),
            sd: self.rrt.iter().zip(&u.sd).map(|(p, m)| p * m * p).collect(),
        }
    }

    fn lam_sq(&self) -> ConeVec {
        ConeVec {
            lp: self.lam_lp.map(|x| x * x),
            sd: self.lam_sd.iter().map(|l| DMatrix::from_diagonal(&l.map(|x| x * x))).collect(),
        }
    }

    /// Solves `λ ∘ x = u` for `x`.
    fn lam_div(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lp: u.lp.component_div(&self.lam_lp),
            sd: self
                .lam_sd
                .iter()
                .zip(&u.sd)
                .map(|(l, m)| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| 2.0 * m[(i, j)] / (l[i] + l[j])))
                .collect(),
        }
    }

    /// Largest `α` with `λ + α u` in the cone.
    fn step(&self, u: &ConeVec) -> f64 {
        let mut a = f64::INFINITY;
        for (l, v) in self.lam_lp.iter().zip(u.lp.iter()) {
            if *v < 0.0 {
                a = a.min(-l / v);
            }
        }
        for (l, m) in self.lam_sd.iter().zip(&u.sd) {
            if m.nrows() == 0 {
                continue;
            }
            let sc = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
                0.5 * (m[(i, j)] + m[(j, i)]) / (l[i] * l[j]).sqrt()
            });
            let emin = SymmetricEigen::new(sc).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if emin < 0.0 {
                a = a.min(-1.0 / emin);
            }
        }
        a
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Every PSD block of `v + alpha d` has a Cholesky factor.
fn factorable(v: &ConeVec, d: &ConeVec, alpha: f64) -> bool {
    v.sd.iter().zip(&d.sd).all(|(m, dm)| Cholesky::new(symmetrize(&(m + dm * alpha))).is_some())
}

fn jordan(u: &ConeVec, v: &ConeVec) -> ConeVec {
    ConeVec {
        lp: u.lp.component_mul(&v.lp),
        sd: u.sd.iter().zip(&v.sd).map(|(a, b)| (a * b + b * a) * 0.5).collect(),
    }
}

fn chol_regularized(mut h: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = h.nrows();
    let maxd = (0..n).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
    let mut delta = 0.0;
    loop {
        if let Some(c) = Cholesky::new(h.clone()) {
            return Some(c);
        }
        let next = if delta == 0.0 { 1e-14 * maxd } else { delta * 100.0 };
        if next > 1e-6 * maxd {
            return None;
        }
        for i in 0..n {
            h[(i, i)] += next - delta;
        }
        delta = next;
    }
}

/// `H_ij += tr(G_i P G_j P)` over the columns of one block.
fn add_block_schur(h: &mut DMatrix<f64>, blk: &SdpBlock, p: &DMatrix<f64>) {
    let ng = blk.groups.len();
    let pl: Vec<DMatrix<f64>> = blk.groups.iter().map(|l| p * l).collect();
    let mut mab: Vec<Option<DMatrix<f64>>> = vec![None; ng * ng];
    let mut m_of = |a: usize, b: usize| -> DMatrix<f64> {
        if mab[a * ng + b].is_none() {
            mab[a * ng + b] = Some(blk.groups[a].transpose() * &pl[b]);
        }
        mab[a * ng + b].clone().unwrap_or_else(|| DMatrix::zeros(0, 0))
    };
    let add = |h: &mut DMatrix<f64>, i: usize, j: usize, v: f64| {
        h[(i, j)] += v;
        if i != j {
            h[(j, i)] += v;
        }
    };
    let cong: Vec<usize> = (0..blk.cols.len()).filter(|&k| matches!(blk.shape[k], ColShape::Congruence { .. })).collect();
    // Pairs of congruence columns, grouped by group pair.
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); ng];
    for &k in &cong {
        if let ColShape::Congruence { group, .. } = blk.shape[k] {
            by_group[group].push(k);
        }
    }
    for a in 0..ng {
        for b in a..ng {
            if by_group[a].is_empty() || by_group[b].is_empty() {
                continue;
            }
            let m = m_of(a, b);
            for (ii, &ci) in by_group[a].iter().enumerate() {
                let ColShape::Congruence { local: li, .. } = &blk.shape[ci] else { continue };
                let start = if a == b { ii } else { 0 };
                for &cj in &by_group[b][start..] {
                    let ColShape::Congruence { local: lj, .. } = &blk.shape[cj] else { continue };
                    let mut v = 0.0;
                    for &(r, c, x) in li {
                        for &(r2, c2, y) in lj {
                            v += x * y * m[(c, r2)] * m[(r, c2)];
                        }
                    }
                    add(h, blk.cols[ci].0, blk.cols[cj].0, v);
                }
            }
        }
    }
    for jj in 0..blk.cols.len() {
        if !matches!(blk.shape[jj], ColShape::Generic) {
            continue;
        }
        let mut g = DMatrix::zeros(blk.dim, blk.dim);
        blk.cols[jj].1.add_to(1.0, &mut g);
        let q = p * g * p;
        let lq: Vec<DMatrix<f64>> = blk.groups.iter().map(|l| l.transpose() * &q * l).collect();
        for ii in 0..blk.cols.len() {
            let v = match &blk.shape[ii] {
                ColShape::Generic if ii > jj => continue,
                ColShape::Generic => blk.cols[ii].1.inner(&q),
                ColShape::Congruence { group, local } => {
                    local.iter().map(|&(r, c, x)| x * lq[*group][(r, c)]).sum()
                }
            };
            add(h, blk.cols[ii].0, blk.cols[jj].0, v);
        }
    }
}

struct Kkt {
    chol: Cholesky<f64, Dyn>,
    eq: Option<(DMatrix<f64>, Cholesky<f64, Dyn>)>,
}

impl Kkt {
    fn factor(f: &StdForm, w: &Scaling) -> Result<Self, String> {
        let n = f.n;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (row, d) in f.lp_rows.iter().zip(w.d.iter()) {
            let wt = 1.0 / (d * d);
            for &(i, gi) in row {
                for &(j, gj) in row {
                    h[(i, j)] += wt * gi * gj;
                }
            }
        }
        for (blk, p) in f.blocks.iter().zip(&w.p) {
            add_block_schur(&mut h, blk, p);
        }
        let m = f.a_rows.len();
        let mut at = DMatrix::<f64>::zeros(n, m);
        for (k, row) in f.a_rows.iter().enumerate() {
            for &(i, a) in row {
                at[(i, k)] += a;
            }
        }
        if m > 0 {
            h += &at * at.transpose();
        }
        let chol = chol_regularized(h).ok_or("Schur complement is not positive definite")?;
        let eq = if m > 0 {
            let hm = chol.solve(&at);
            let s = at.transpose() * &hm;
            let sc = chol_regularized(s).ok_or("equality constraints are rank deficient")?;
            Some((hm, sc))
        } else {
            None
        };
        Ok(Kkt { chol, eq })
    }

    fn solve_once(
        &self,
        f: &StdForm,
        w: &Scaling,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &ConeVec,
    ) -> (DVector<f64>, DVector<f64>, ConeVec) {
        let t = bx + f.gtz(&w.qinv(bz));
        let (ux, uy) = match &self.eq {
            None => (self.chol.solve(&t), DVector::zeros(0)),
            Some((hm, sc)) => {
                let rhs = t + f.aty(by);
                let wv = self.chol.solve(&rhs);
                let uy = sc.solve(&(f.ax(&wv) - by));
                let ux = wv - hm * &uy;
                (ux, uy)
            }
        };
        let uz = w.qinv(&f.gx(&ux).sub(bz));
        (ux, uy, uz)
    }

    /// Solves `[0 Aᵀ Gᵀ; A 0 0; G 0 -WᵀW] u = b` with iterative refinement.
    fn solve(
        &self,
        f: &StdForm,
        w: &Scaling,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &ConeVec,
        refine: usize,
    ) -> (DVector<f64>, DVector<f64>, ConeVec) {
        let (mut ux, mut uy, mut uz) = self.solve_once(f, w, bx, by, bz);
        for _ in 0..refine {
            let mut r1 = bx - f.gtz(&uz);
            if !f.a_rows.is_empty() {
                r1 -= f.aty(&uy);
            }
            let r2 = by - f.ax(&ux);
            let mut r3 = f.gx(&ux);
            r3.axpy(-1.0, &w.q(&uz));
            let r3 = bz.sub(&r3);
            let (cx, cy, cz) = self.solve_once(f, w, &r1, &r2, &r3);
            ux += cx;
            uy += cy;
            uz.axpy(1.0, &cz);
        }
        (ux, uy, uz)
    }
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: ConeVec,
    ds: ConeVec,
    dtau: f64,
    dkappa: f64,
    shat: ConeVec,
    zhat: ConeVec,
}

pub fn solve(f: &StdForm, opts: &SolverOptions) -> RawResult {
    let c = &f.c;
    let b = &f.b;
    let h = f.h();
    let resx0 = c.norm().max(1.0);
    let resy0 = b.norm().max(1.0);
    let resz0 = h.norm().max(1.0);
    let nu = f.degree() as f64;

    let fail = |msg: String, x, y, z, it| RawResult {
        status: RawStatus::Failure(msg),
        x,
        y,
        z,
        iterations: it,
        pres: f64::NAN,
        dres: f64::NAN,
        gap: f64::NAN,
        pcost: f64::NAN,
        dcost: f64::NAN,
    };

    let ident = Scaling::identity(f);
    let kkt = match Kkt::factor(f, &ident) {
        Ok(k) => k,
        Err(e) => {
            return fail(e, DVector::zeros(f.n), DVector::zeros(b.len()), ConeVec::zeros(f), 0)
        }
    };
    let zero_n = DVector::zeros(f.n);
    let zero_m = DVector::zeros(b.len());
    let (mut x, _, zz) = kkt.solve(f, &ident, &zero_n, b, &h, opts.refinement);
    let mut s = zz.scaled(-1.0);
    let (_, mut y, mut z) = kkt.solve(f, &ident, &(-c), &zero_m, &ConeVec::zeros(f), opts.refinement);

    let ts = s.max_violation();
    if ts >= -1e-8 * s.norm().max(1.0) {
        s.add_identity(1.0 + ts);
    }
    let tz = z.max_violation();
    if tz >= -1e-8 * z.norm().max(1.0) {
        z.add_identity(1.0 + tz);
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut best: Option<(f64, RawResult)> = None;
    for it in 0..=opts.max_iter {
        let gtz = f.gtz(&z);
        let aty = f.aty(&y);
        let ax = f.ax(&x);
        let mut gxs = f.gx(&x);
        gxs.axpy(1.0, &s);
        let rx = &aty + &gtz + c * tau;
        let ry = &ax - b * tau;
        let mut rz = gxs.clone();
        rz.axpy(-tau, &h);
        let cx = c.dot(&x);
        let hz_by = h.dot(&z) + b.dot(&y);
        let rt = kappa + cx + hz_by;

        let sz = s.dot(&z);
        let mu = (sz + tau * kappa) / (nu + 1.0);
        let pres = (ry.norm() / resy0).max(rz.norm() / resz0) / tau;
        let dres = rx.norm() / resx0 / tau;
        let pcost = cx / tau;
        let dcost = -hz_by / tau;
        let gap = sz / (tau * tau);
        let relgap = gap / pcost.abs().max(1.0);

        if std::env::var_os("CONIC_TRACE").is_some() {
            eprintln!("{it:3} pcost {pcost:+.6e} dcost {dcost:+.6e} gap {relgap:.2e} pres {pres:.2e} dres {dres:.2e} tau {tau:.2e} kappa {kappa:.2e}");
        }
        let score = (pres / opts.feastol).max(dres / opts.feastol).max(relgap / opts.tol);
        if score <= REDUCED_FACTOR && best.as_ref().map_or(true, |b| score < b.0) {
            best = Some((
                score,
                RawResult {
                    status: RawStatus::OptimalReduced,
                    x: &x / tau,
                    y: &y / tau,
                    z: z.scaled(1.0 / tau),
                    iterations: it,
                    pres,
                    dres,
                    gap: relgap,
                    pcost,
                    dcost,
                },
            ));
        }
        if pres <= opts.feastol && dres <= opts.feastol && relgap <= opts.tol {
            return RawResult {
                status: RawStatus::Optimal,
                x: x / tau,
                y: y / tau,
                z: z.scaled(1.0 / tau),
                iterations: it,
                pres,
                dres,
                gap: relgap,
                pcost,
                dcost,
            };
        }
        if hz_by < 0.0 {
            let pinf = (&aty + &gtz).norm() / resx0 / (-hz_by);
            if pinf <= opts.feastol {
                let k = -1.0 / hz_by;
                return RawResult {
                    status: RawStatus::PrimalInfeasible,
                    x: DVector::zeros(f.n),
                    y: y * k,
                    z: z.scaled(k),
                    iterations: it,
                    pres: f64::NAN,
                    dres: pinf,
                    gap: f64::NAN,
                    pcost: f64::INFINITY,
                    dcost: f64::INFINITY,
                };
            }
        }
        if cx < 0.0 {
            let dinf = (ax.norm() / resy0).max(gxs.norm() / resz0) / (-cx);
            if dinf <= opts.feastol {
                let k = -1.0 / cx;
                return RawResult {
                    status: RawStatus::DualInfeasible,
                    x: x * k,
                    y: DVector::zeros(b.len()),
                    z: ConeVec::zeros(f),
                    iterations: it,
                    pres: dinf,
                    dres: f64::NAN,
                    gap: f64::NAN,
                    pcost: f64::NEG_INFINITY,
                    dcost: f64::NEG_INFINITY,
                };
            }
        }
        if it == opts.max_iter {
            let mut r = fail(format!("iteration limit {} reached", opts.max_iter), x / tau, y / tau, z.scaled(1.0 / tau), it);
            r.pres = pres;
            r.dres = dres;
            r.gap = relgap;
            r.pcost = pcost;
            r.dcost = dcost;
            return or_best(&mut best, r);
        }

        let w = match Scaling::compute(&s, &z) {
            Ok(w) => w,
            Err(e) => return or_best(&mut best, fail(e, x / tau, y / tau, z.scaled(1.0 / tau), it)),
        };
        let kkt = match Kkt::factor(f, &w) {
            Ok(k) => k,
            Err(e) => return or_best(&mut best, fail(e, x / tau, y / tau, z.scaled(1.0 / tau), it)),
        };
        let (x1, y1, z1) = kkt.solve(f, &w, c, &(-b), &h.scaled(-1.0), opts.refinement);
        let wz1 = w.w(&z1);
        let denom = wz1.dot(&wz1) + kappa / tau;
        if !(denom > 0.0) || !denom.is_finite() {
            return or_best(&mut best, fail("homogeneous direction breakdown".into(), x / tau, y / tau, z.scaled(1.0 / tau), it));
        }

        let newton = |eta: f64, dsv: &ConeVec, dk: f64| -> Direction {
            let r1 = &rx * (-eta);
            let r2 = &ry * (-eta);
            let mut r3 = rz.scaled(-eta);
            r3.axpy(-1.0, &w.wt(&w.lam_div(dsv)));
            let r4 = -eta * rt - dk / tau;
            let (x2, y2, z2) = kkt.solve(f, &w, &r1, &r2, &r3, opts.refinement);
            let dtau = (c.dot(&x2) + b.dot(&y2) + h.dot(&z2) - r4) / denom;
            let dx = x2 - &x1 * dtau;
            let dy = y2 - &y1 * dtau;
            let mut dz = z2;
            dz.axpy(-dtau, &z1);
            let zhat = w.w(&dz);
            let mut ds = rz.scaled(-eta);
            ds.axpy(-1.0, &f.gx(&dx));
            ds.axpy(dtau, &h);
            let shat = w.wt_inv(&ds);
            let dkappa = (dk - kappa * dtau) / tau;
            Direction { dx, dy, dz, ds, dtau, dkappa, shat, zhat }
        };
        let max_step = |d: &Direction| -> f64 {
            let mut a = w.step(&d.shat).min(w.step(&d.zhat));
            if d.dtau < 0.0 {
                a = a.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-kappa / d.dkappa);
            }
            a
        };

        let lsq = w.lam_sq();
        let aff = newton(1.0, &lsq.scaled(-1.0), -tau * kappa);
        let a_aff = max_step(&aff).min(1.0);
        let sigma = (1.0 - a_aff).powi(3).clamp(0.0, 1.0);

        let mut dsc = lsq.scaled(-1.0);
        dsc.axpy(-1.0, &jordan(&aff.shat, &aff.zhat));
        let mut e = ConeVec::identity(f);
        e = e.scaled(sigma * mu);
        dsc.axpy(1.0, &e);
        let dkc = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
        let dir = newton(1.0 - sigma, &dsc, dkc);
        let mut alpha = (0.99 * max_step(&dir)).min(1.0);
        // The eigenvalue step bound is exact in theory; near the boundary the
        // updated blocks can still fail to factor, so back off until they do.
        for _ in 0..20 {
            if factorable(&s, &dir.ds, alpha) && factorable(&z, &dir.dz, alpha) {
                break;
            }
            alpha *= 0.7;
        }
        if !(alpha > 1e-14) {
            return or_best(&mut best, fail("step length collapsed".into(), x / tau, y / tau, z.scaled(1.0 / tau), it));
        }

        x.axpy(alpha, &dir.dx, 1.0);
        y.axpy(alpha, &dir.dy, 1.0);
        z.axpy(alpha, &dir.dz);
        s.axpy(alpha, &dir.ds);
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
    }
    unreachable!()
}
