//! Conic form of the per-slot delivery subproblem: SIC structure,
//! S-procedure QoS LMIs, robust QMI secrecy LMIs, big-M coupling rows,
//! AN support and per-BS power caps.

use conic::{Complex64, ConicProblem, ConstraintId, MatrixExpr, ScalarExpr, Solution, VarId, VarKind};

use crate::error::{Error, Result};
use crate::placement::CachePlacement;
use crate::scenario::{CMat, CVec, ChannelSlot, NetworkTopology, RequestSet, VideoLibrary};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// SIC coefficients over all (request, layer) streams.
#[derive(Debug, Clone, PartialEq)]
pub struct SicTable {
    pub streams: Vec<(usize, usize)>,
    a: Vec<Vec<bool>>,
}

impl SicTable {
    /// `a` for stream `i` being decoded with stream `j` present.
    pub fn a(&self, i: usize, j: usize) -> bool {
        self.a[i][j]
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn position(&self, r: usize, l: usize) -> Option<usize> {
        self.streams.iter().position(|&s| s == (r, l))
    }
}

pub fn sic_coefficient(r: usize, l: usize, r2: usize, l2: usize) -> bool {
    !(r == r2 && l >= l2)
}

pub fn sic_table(requests: &RequestSet) -> SicTable {
    let streams = requests.streams();
    let a = streams
        .iter()
        .map(|&(r, l)| streams.iter().map(|&(r2, l2)| sic_coefficient(r, l, r2, l2)).collect())
        .collect();
    SicTable { streams, a }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Big-M rows with penalized slacks; q enters only right-hand sides.
    Slacked,
    /// Supports restricted to the cooperation sets; no slacks.
    Eliminated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub mode: Mode,
    /// Penalty weight mu on the slacks (watts per watt).
    pub mu: f64,
    /// When false every uncertainty radius is treated as zero.
    pub robust: bool,
}

/// A matrix `sel X selᴴ` where `X` is a solver variable on a coordinate subspace.
#[derive(Debug, Clone)]
pub struct Lifted {
    pub var: Option<VarId>,
    pub sel: CMat,
}

impl Lifted {
    pub fn dim(&self) -> usize {
        self.sel.ncols()
    }

    /// Full N x N value in solver units.
    pub fn value(&self, sol: &Solution) -> CMat {
        match self.var {
            Some(v) => &self.sel * sol.value(v).matrix() * self.sel.adjoint(),
            None => CMat::zeros(self.sel.nrows(), self.sel.nrows()),
        }
    }

    fn inner(&self, e: ScalarExpr, a: &CMat) -> ScalarExpr {
        match self.var {
            Some(v) => e.inner(v, self.sel.adjoint() * a * &self.sel),
            None => e,
        }
    }

    fn trace(&self, e: ScalarExpr, scale: f64) -> ScalarExpr {
        match self.var {
            Some(v) => e.trace(v, self.dim(), scale),
            None => e,
        }
    }

    fn congruence(&self, e: MatrixExpr, left: &CMat, scale: f64) -> MatrixExpr {
        match self.var {
            Some(v) => e.congruence(v, left * &self.sel, scale),
            None => e,
        }
    }
}

/// The auxiliary matrix W̄_{rho,l,j}.
#[derive(Debug, Clone)]
pub enum WbarRef {
    Var(Lifted),
    SameAsW,
    Zero,
}

/// One term `coef * X` of a composite matrix T.
#[derive(Debug, Clone)]
pub struct Term {
    pub lift: Lifted,
    pub coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiKind {
    Qos,
    Secrecy,
}

/// Record of one emitted QoS or secrecy constraint.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub kind: LmiKind,
    pub tag: String,
    /// N + 1 (QoS), N + N_j (secrecy), 1 or N_j for nominal forms.
    pub dim: usize,
    pub constraint: ConstraintId,
    pub delta: Option<VarId>,
    /// U_rho = [I, ĥ] or U_j = [Ĝ_j, I]; empty for nominal forms.
    pub lifting: CMat,
    pub nominal: bool,
}

fn herm_normalize(xi: &CMat, eps: f64) -> (CMat, f64) {
    let s = conic::embed::hermitian_part(xi).symmetric_eigen().eigenvalues.max();
    (xi / c(s), eps * eps / s)
}

fn blkdiag(a: &CMat, b: &CMat) -> CMat {
    let n = a.nrows() + b.nrows();
    let mut m = CMat::zeros(n, n);
    m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    m.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    m
}

/// `[I_N, ĥ]`.
pub fn qos_lifting(h_hat: &CVec) -> CMat {
    let n = h_hat.len();
    let mut u = CMat::zeros(n, n + 1);
    u.view_mut((0, 0), (n, n)).fill_with_identity();
    u.set_column(n, h_hat);
    u
}

/// `[Ĝ_j, I_N]`.
pub fn secrecy_lifting(g_hat: &CMat) -> CMat {
    let (n, nj) = g_hat.shape();
    let mut u = CMat::zeros(n, nj + n);
    u.view_mut((0, 0), (n, nj)).copy_from(g_hat);
    u.view_mut((0, nj), (n, n)).fill_with_identity();
    u
}

/// `Uᴴ T U - blkdiag(-delta Xi, noise + delta eps^2)`, which must be PSD.
pub fn qos_lmi_value(t: &CMat, h_hat: &CVec, xi: &CMat, eps: f64, noise: f64, delta: f64) -> CMat {
    let u = qos_lifting(h_hat);
    let rhs = blkdiag(&(xi * c(-delta)), &CMat::from_element(1, 1, c(noise + delta * eps * eps)));
    u.adjoint() * t * &u - rhs
}

/// `blkdiag((noise - delta) I, (delta / eps^2) Xi) - Uᴴ T U`, which must be PSD.
pub fn secrecy_lmi_value(t: &CMat, g_hat: &CMat, xi: &CMat, eps: f64, noise: f64, delta: f64) -> CMat {
    let u = secrecy_lifting(g_hat);
    let nj = g_hat.ncols();
    let rhs = blkdiag(&(CMat::identity(nj, nj) * c(noise - delta)), &(xi * c(delta / (eps * eps))));
    rhs - u.adjoint() * t * &u
}

/// Appends the S-procedure form of `min over the ellipsoid of hᴴ T h >= noise`.
pub fn qos_lmi(
    p: &mut ConicProblem,
    tag: &str,
    h_hat: &CVec,
    xi: &CMat,
    eps: f64,
    noise: f64,
    terms: &[Term],
) -> Result<LmiBlock> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("{tag}: negative uncertainty radius {eps}")));
    }
    let n = h_hat.len();
    if eps == 0.0 {
        let hh = h_hat * h_hat.adjoint();
        let mut e = ScalarExpr::new();
        for t in terms {
            e = t.lift.inner(e, &(&hh * c(-t.coef)));
        }
        let constraint = p.add_le(tag, e, -noise);
        return Ok(LmiBlock {
            kind: LmiKind::Qos,
            tag: tag.into(),
            dim: 1,
            constraint,
            delta: None,
            lifting: CMat::zeros(0, 0),
            nominal: true,
        });
    }
    let (xi, eps2) = herm_normalize(xi, eps);
    let u = qos_lifting(h_hat);
    let uh = u.adjoint();
    let delta = p.add_var(format!("delta {tag}"), VarKind::NonNeg);
    let mut k = CMat::zeros(n + 1, n + 1);
    k[(n, n)] = c(-noise);
    let mut d = blkdiag(&xi, &CMat::zeros(1, 1));
    d[(n, n)] = c(-eps2);
    let mut e = MatrixExpr::new(n + 1).with_constant(k).scaled(delta, d);
    for t in terms {
        e = t.lift.congruence(e, &uh, t.coef);
    }
    let constraint = p.add_lmi(tag, e);
    Ok(LmiBlock { kind: LmiKind::Qos, tag: tag.into(), dim: n + 1, constraint, delta: Some(delta), lifting: u, nominal: false })
}

/// Appends the robust QMI form of `Gᴴ T G <= noise I` over the matrix ellipsoid.
/// A zero radius gives the nominal LMI `noise I - Ĝᴴ T Ĝ >= 0`.
pub fn secrecy_lmi(
    p: &mut ConicProblem,
    tag: &str,
    g_hat: &CMat,
    xi: &CMat,
    eps: f64,
    noise: f64,
    terms: &[Term],
) -> Result<LmiBlock> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("{tag}: negative uncertainty radius {eps}")));
    }
    let (n, nj) = g_hat.shape();
    if eps == 0.0 {
        let gh = g_hat.adjoint();
        let mut e = MatrixExpr::new(nj).with_constant(CMat::identity(nj, nj) * c(noise));
        for t in terms {
            e = t.lift.congruence(e, &gh, -t.coef);
        }
        let constraint = p.add_lmi(tag, e);
        return Ok(LmiBlock {
            kind: LmiKind::Secrecy,
            tag: tag.into(),
            dim: nj,
            constraint,
            delta: None,
            lifting: CMat::zeros(0, 0),
            nominal: true,
        });
    }
    let (xi, eps2) = herm_normalize(xi, eps);
    let u = secrecy_lifting(g_hat);
    let uh = u.adjoint();
    let delta = p.add_var(format!("delta {tag}"), VarKind::NonNeg);
    let k = blkdiag(&(CMat::identity(nj, nj) * c(noise)), &CMat::zeros(n, n));
    let d = blkdiag(&(CMat::identity(nj, nj) * c(-1.0)), &(xi * c(1.0 / eps2)));
    let mut e = MatrixExpr::new(nj + n).with_constant(k).scaled(delta, d);
    for t in terms {
        e = t.lift.congruence(e, &uh, -t.coef);
    }
    let constraint = p.add_lmi(tag, e);
    Ok(LmiBlock {
        kind: LmiKind::Secrecy,
        tag: tag.into(),
        dim: nj + n,
        constraint,
        delta: Some(delta),
        lifting: u,
        nominal: false,
    })
}

/// A perturbed big-M row `expr - s <= rhs(q)`.
#[derive(Debug, Clone)]
pub struct BigM {
    pub stream: usize,
    /// BS index m (C3) or untrusted BS index j (C8, C9).
    pub bs: usize,
    pub file: usize,
    pub layer: usize,
    pub constraint: ConstraintId,
    pub slack: VarId,
    /// Power scale multiplying q in the row, watts.
    pub power: f64,
}

#[derive(Debug, Clone)]
pub struct Subproblem {
    pub problem: ConicProblem,
    pub mode: Mode,
    pub mu: f64,
    pub robust: bool,
    pub q: CachePlacement,
    /// Watts per solver power unit.
    pub p_unit: f64,
    pub sic: SicTable,
    pub w: Vec<Lifted>,
    /// `[stream][untrusted index]`.
    pub wbar: Vec<Vec<WbarRef>>,
    pub v: Lifted,
    pub c3: Vec<BigM>,
    pub c8: Vec<BigM>,
    pub c9: Vec<BigM>,
    pub c5: Vec<ConstraintId>,
    pub qos: Vec<LmiBlock>,
    pub secrecy: Vec<LmiBlock>,
}

fn selection(n: usize, idx: &[usize]) -> CMat {
    let mut s = CMat::zeros(n, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        s[(i, k)] = c(1.0);
    }
    s
}

fn diag_mask(d: &nalgebra::DVector<f64>) -> CMat {
    CMat::from_diagonal(&d.map(c))
}

/// Geometric mean of sigma^2 / |ĥ|^2 over the requests; 1 W when there are none.
pub fn power_unit(topo: &NetworkTopology, slot: &ChannelSlot) -> f64 {
    let logs: Vec<f64> = slot
        .h_hat
        .iter()
        .map(|h| h.norm_squared())
        .filter(|&g| g > 0.0)
        .map(|g| (topo.noise_user / g).ln())
        .collect();
    if logs.is_empty() {
        1.0
    } else {
        (logs.iter().sum::<f64>() / logs.len() as f64).exp()
    }
}

pub fn assemble_subproblem(
    topo: &NetworkTopology,
    lib: &VideoLibrary,
    requests: &RequestSet,
    slot: &ChannelSlot,
    q: &CachePlacement,
    opts: &BuildOptions,
) -> Result<Subproblem> {
    q.validate(topo, lib)?;
    if opts.mode == Mode::Slacked && !(opts.mu >= 1.0) {
        return Err(Error::Config(format!("penalty weight {} must be at least 1", opts.mu)));
    }
    let n = topo.total_antennas();
    let sic = sic_table(requests);
    let p_unit = power_unit(topo, slot);
    let su = (p_unit / topo.noise_user).sqrt();
    let se = (p_unit / topo.noise_eve).sqrt();
    let p_tot = topo.p_total() / p_unit;
    let untrusted: Vec<usize> = topo.untrusted().collect();
    let mut p = ConicProblem::new();

    let full = selection(n, &(0..n).collect::<Vec<_>>());
    let mut w = Vec::with_capacity(sic.len());
    for &(r, l) in &sic.streams {
        let f = requests.requests[r].file;
        let name = format!("W r{r} l{l}");
        let lift = match opts.mode {
            Mode::Slacked => Lifted { var: Some(p.add_var(name, VarKind::Hermitian { dim: n, psd: true })), sel: full.clone() },
            Mode::Eliminated => {
                let idx: Vec<usize> = q.coop(f, l).into_iter().flat_map(|m| topo.antenna_range(m)).collect();
                let var = (!idx.is_empty()).then(|| p.add_var(name, VarKind::Hermitian { dim: idx.len(), psd: true }));
                Lifted { var, sel: selection(n, &idx) }
            }
        };
        w.push(lift);
    }
    let nt = topo.trusted_antennas();
    let v = Lifted {
        var: Some(p.add_var("V", VarKind::Hermitian { dim: nt, psd: true })),
        sel: selection(n, &(0..nt).collect::<Vec<_>>()),
    };

    // W̄ is needed for stream s at j whenever some base-layer stream other than s sees it.
    let base: Vec<usize> = (0..sic.len()).filter(|&i| sic.streams[i].1 == 0).collect();
    let mut wbar: Vec<Vec<WbarRef>> = Vec::with_capacity(sic.len());
    for (s, &(r, l)) in sic.streams.iter().enumerate() {
        let needed = base.iter().any(|&b| b != s && sic.a(b, s));
        let f = requests.requests[r].file;
        let row: Vec<WbarRef> = untrusted
            .iter()
            .map(|&j| {
                if !needed {
                    return WbarRef::Zero;
                }
                match opts.mode {
                    Mode::Slacked => WbarRef::Var(Lifted {
                        var: Some(p.add_var(format!("Wbar r{r} l{l} j{j}"), VarKind::Hermitian { dim: n, psd: true })),
                        sel: full.clone(),
                    }),
                    Mode::Eliminated => {
                        if q.get(f, l, j) {
                            WbarRef::Zero
                        } else {
                            WbarRef::SameAsW
                        }
                    }
                }
            })
            .collect();
        wbar.push(row);
    }

    let mut obj = ScalarExpr::new();
    for lift in w.iter().chain(std::iter::once(&v)) {
        obj = lift.trace(obj, 1.0);
    }

    let mut c3 = Vec::new();
    let mut c8 = Vec::new();
    let mut c9 = Vec::new();
    if opts.mode == Mode::Slacked {
        for (s, &(r, l)) in sic.streams.iter().enumerate() {
            let f = requests.requests[r].file;
            for m in 0..topo.num_bs {
                let slack = p.add_var(format!("s3 r{r} l{l} m{m}"), VarKind::NonNeg);
                obj = obj.var(slack, opts.mu);
                let e = w[s].inner(ScalarExpr::new(), &diag_mask(&topo.selector(m))).var(slack, -1.0);
                let rhs = if q.get(f, l, m) { topo.max_power[m] / p_unit } else { 0.0 };
                let constraint = p.add_le(format!("C3 r{r} l{l} m{m}"), e, rhs);
                c3.push(BigM { stream: s, bs: m, file: f, layer: l, constraint, slack, power: topo.max_power[m] });
            }
            for (jj, &j) in untrusted.iter().enumerate() {
                let WbarRef::Var(wb) = &wbar[s][jj] else { continue };
                let cached = q.get(f, l, j);
                let s8 = p.add_var(format!("s8 r{r} l{l} j{j}"), VarKind::NonNeg);
                let s9 = p.add_var(format!("s9 r{r} l{l} j{j}"), VarKind::NonNeg);
                obj = obj.var(s8, opts.mu).var(s9, opts.mu);
                let e8 = wb.trace(w[s].trace(ScalarExpr::new(), 1.0), -1.0).var(s8, -1.0);
                let rhs8 = if cached { p_tot } else { 0.0 };
                let k8 = p.add_le(format!("C8 r{r} l{l} j{j}"), e8, rhs8);
                c8.push(BigM { stream: s, bs: j, file: f, layer: l, constraint: k8, slack: s8, power: topo.p_total() });
                let e9 = wb.trace(ScalarExpr::new(), 1.0).var(s9, -1.0);
                let rhs9 = if cached { 0.0 } else { p_tot };
                let k9 = p.add_le(format!("C9 r{r} l{l} j{j}"), e9, rhs9);
                c9.push(BigM { stream: s, bs: j, file: f, layer: l, constraint: k9, slack: s9, power: topo.p_total() });
                let e10 = wb.congruence(w[s].congruence(MatrixExpr::new(n), &full, 1.0), &full, -1.0);
                p.add_lmi(format!("C10 r{r} l{l} j{j}"), e10);
            }
        }
    }
    p.set_objective(obj);

    let mut c5 = Vec::new();
    for m in 0..topo.num_bs {
        let mask = diag_mask(&topo.selector(m));
        let mut e = ScalarExpr::new();
        for lift in w.iter().chain(std::iter::once(&v)) {
            if lift.var.is_some() && (lift.sel.adjoint() * &mask * &lift.sel).iter().any(|z| z.norm() > 0.0) {
                e = lift.inner(e, &mask);
            }
        }
        if !e.terms.is_empty() {
            c5.push(p.add_le(format!("C5 m{m}"), e, topo.max_power[m] / p_unit));
        }
    }

    let mut qos = Vec::new();
    for (s, &(r, l)) in sic.streams.iter().enumerate() {
        let req = &requests.requests[r];
        let mut terms = vec![Term { lift: w[s].clone(), coef: 1.0 / req.eta_req(l) }];
        for s2 in 0..sic.len() {
            if s2 != s && sic.a(s, s2) {
                terms.push(Term { lift: w[s2].clone(), coef: -1.0 });
            }
        }
        terms.push(Term { lift: v.clone(), coef: -1.0 });
        let eps = if opts.robust { slot.eps_user[r] * su } else { 0.0 };
        let h = &slot.h_hat[r] * c(su);
        qos.push(qos_lmi(&mut p, &format!("C6 r{r} l{l}"), &h, &slot.xi_user[r], eps, 1.0, &terms)?);
    }

    let mut secrecy = Vec::new();
    for &s0 in &base {
        let r = sic.streams[s0].0;
        let req = &requests.requests[r];
        for (jj, &j) in untrusted.iter().enumerate() {
            let mut terms = vec![Term { lift: w[s0].clone(), coef: 1.0 / req.eta_tol() }];
            for s2 in 0..sic.len() {
                if s2 == s0 || !sic.a(s0, s2) {
                    continue;
                }
                match &wbar[s2][jj] {
                    WbarRef::Var(lift) => terms.push(Term { lift: lift.clone(), coef: -1.0 }),
                    WbarRef::SameAsW => terms.push(Term { lift: w[s2].clone(), coef: -1.0 }),
                    WbarRef::Zero => {}
                }
            }
            terms.push(Term { lift: v.clone(), coef: -1.0 });
            let eps = if opts.robust { slot.eps_eve[jj] * se } else { 0.0 };
            let g = &slot.g_hat[jj] * c(se);
            secrecy.push(secrecy_lmi(&mut p, &format!("C7 r{r} j{j}"), &g, &slot.xi_eve[jj], eps, 1.0, &terms)?);
        }
    }

    Ok(Subproblem {
        problem: p,
        mode: opts.mode,
        mu: opts.mu,
        robust: opts.robust,
        q: q.clone(),
        p_unit,
        sic,
        w,
        wbar,
        v,
        c3,
        c8,
        c9,
        c5,
        qos,
        secrecy,
    })
}

/// Multipliers of the perturbed big-M rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBundle {
    pub c3: Vec<f64>,
    pub c8: Vec<f64>,
    pub c9: Vec<f64>,
}

pub fn extract_duals(sp: &Subproblem, sol: &Solution) -> Result<DualBundle> {
    if sp.mode == Mode::Eliminated {
        return Err(Error::NoDuals("big-M"));
    }
    let get = |rows: &[BigM]| -> Result<Vec<f64>> {
        rows.iter()
            .map(|b| {
                let v = sol.dual(b.constraint).scalar();
                if v < -1e-10 {
                    Err(Error::NegativeDual { tag: sp.problem.constraints[b.constraint.0].tag.clone(), value: v })
                } else {
                    Ok(v.max(0.0))
                }
            })
            .collect()
    };
    Ok(DualBundle { c3: get(&sp.c3)?, c8: get(&sp.c8)?, c9: get(&sp.c9)? })
}

impl Subproblem {
    /// U_TP in watts.
    pub fn total_power(&self, sol: &Solution) -> f64 {
        let mut t = 0.0;
        for lift in self.w.iter().chain(std::iter::once(&self.v)) {
            if let Some(v) = lift.var {
                t += sol.value(v).matrix().trace().re;
            }
        }
        t * self.p_unit
    }

    /// Slack values in watts, C3 then C8 then C9.
    pub fn slacks(&self, sol: &Solution) -> Vec<f64> {
        self.c3
            .iter()
            .chain(&self.c8)
            .chain(&self.c9)
            .map(|b| sol.value(b.slack).scalar().max(0.0) * self.p_unit)
            .collect()
    }

    /// f_Pen in watts.
    pub fn penalty(&self, sol: &Solution) -> f64 {
        self.mu * self.slacks(sol).iter().sum::<f64>()
    }

    /// W per stream in watts.
    pub fn w_values(&self, sol: &Solution) -> Vec<CMat> {
        self.w.iter().map(|l| l.value(sol) * c(self.p_unit)).collect()
    }

    pub fn v_value(&self, sol: &Solution) -> CMat {
        self.v.value(sol) * c(self.p_unit)
    }

    pub fn wbar_value(&self, sol: &Solution, s: usize, jj: usize) -> CMat {
        match &self.wbar[s][jj] {
            WbarRef::Var(l) => l.value(sol) * c(self.p_unit),
            WbarRef::SameAsW => self.w[s].value(sol) * c(self.p_unit),
            WbarRef::Zero => CMat::zeros(self.v.sel.nrows(), self.v.sel.nrows()),
        }
    }

    pub fn num_slacks(&self) -> usize {
        self.c3.len() + self.c8.len() + self.c9.len()
    }
}

