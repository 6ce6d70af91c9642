//! Per-slot secure delivery: solve, rank-one recovery, realized rates.

use conic::{Complex64, ConstraintKind, ScalarExpr, SolveStatus, Solution};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::builder::{assemble_subproblem, sic_table, BuildOptions, Mode, SicTable, Subproblem};
use crate::config::{ErrorSampling, SolverConfig};
use crate::error::Result;
use crate::placement::CachePlacement;
use crate::scenario::{sample_eve_error, sample_user_error, CMat, CVec, ChannelSlot, NetworkTopology, RequestSet, VideoLibrary};

fn c(x: f64) -> conic::Complex64 {
    conic::Complex64::new(x, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutageReason {
    /// Conic infeasibility; `tag` is the constraint carrying most of the certificate.
    Infeasible { tag: String },
    Rank { stream: usize, ratio: f64 },
    Slack { value: f64 },
    /// Constraint violated under the realized channel.
    Realized { tag: String },
    Numerical { message: String },
}

impl OutageReason {
    pub fn tag(&self) -> &str {
        match self {
            OutageReason::Infeasible { tag } | OutageReason::Realized { tag } => tag,
            OutageReason::Rank { .. } => "rank",
            OutageReason::Slack { .. } => "slack",
            OutageReason::Numerical { .. } => "numerical",
        }
    }

    /// Constraint family such as `C6`.
    pub fn family(&self) -> &str {
        self.tag().split_whitespace().next().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum DeliveryStatus {
    Served,
    Outage { reason: OutageReason },
}

impl DeliveryStatus {
    pub fn is_served(&self) -> bool {
        matches!(self, DeliveryStatus::Served)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RateReport {
    /// Per stream, in SIC-table order.
    pub sinr: Vec<f64>,
    pub user: Vec<f64>,
    /// `[base stream][untrusted index]`.
    pub leakage: Vec<Vec<f64>>,
    pub eve: Vec<Vec<f64>>,
    /// Per base stream.
    pub secrecy: Vec<f64>,
    /// Stream index of each base layer.
    pub base_streams: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DeliveryOutcome {
    pub status: DeliveryStatus,
    pub sic: SicTable,
    /// Watts, full N x N.
    pub w: Vec<CMat>,
    pub wbar: Vec<Vec<CMat>>,
    pub v: CMat,
    pub beamformers: Vec<CVec>,
    pub rank_ratios: Vec<f64>,
    pub total_power: f64,
    /// Rank purification re-solves used.
    pub purify_rounds: usize,
    /// Rates under the estimated channels.
    pub estimated: Option<RateReport>,
    /// Rates under the true channels of the slot.
    pub realized: Option<RateReport>,
    pub iterations: usize,
}

impl DeliveryOutcome {
    fn outage(sic: SicTable, reason: OutageReason, n: usize) -> Self {
        DeliveryOutcome {
            status: DeliveryStatus::Outage { reason },
            sic,
            w: vec![],
            wbar: vec![],
            v: CMat::zeros(n, n),
            beamformers: vec![],
            rank_ratios: vec![],
            total_power: 0.0,
            purify_rounds: 0,
            estimated: None,
            realized: None,
            iterations: 0,
        }
    }

    /// Served BS counts for base and enhancement layers.
    pub fn coop_counts(&self, requests: &RequestSet, q: &CachePlacement) -> (f64, f64) {
        let mut base = (0.0, 0);
        let mut enh = (0.0, 0);
        for &(r, l) in &self.sic.streams {
            let n = q.coop(requests.requests[r].file, l).len() as f64;
            let acc = if l == 0 { &mut base } else { &mut enh };
            acc.0 += n;
            acc.1 += 1;
        }
        let avg = |a: (f64, usize)| if a.1 == 0 { 0.0 } else { a.0 / a.1 as f64 };
        (avg(base), avg(enh))
    }

    pub fn record(&self, slot: usize) -> DeliveryRecord {
        DeliveryRecord {
            slot,
            status: self.status.clone(),
            total_power_w: self.total_power,
            rank_ratios: self.rank_ratios.clone(),
            purify_rounds: self.purify_rounds,
            beamformers: self.beamformers.iter().map(|w| w.iter().map(|z| [z.re, z.im]).collect()).collect(),
            realized: self.realized.clone(),
            iterations: self.iterations,
        }
    }
}

/// One JSON-lines row per delivered slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub slot: usize,
    #[serde(flatten)]
    pub status: DeliveryStatus,
    pub total_power_w: f64,
    pub rank_ratios: Vec<f64>,
    pub purify_rounds: usize,
    pub beamformers: Vec<Vec<[f64; 2]>>,
    pub realized: Option<RateReport>,
    pub iterations: usize,
}

/// Principal-eigenvector recovery: `(w, lambda2 / lambda1)`.
pub fn extract_beamformer(w: &CMat) -> (CVec, f64) {
    let n = w.nrows();
    if n == 0 {
        return (CVec::zeros(0), 0.0);
    }
    let h = conic::embed::hermitian_part(w);
    let eig = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[idx[0]];
    let l2 = if n > 1 { eig.eigenvalues[idx[1]].max(0.0) } else { 0.0 };
    if !(l1 > 0.0) {
        return (CVec::zeros(n), 1.0);
    }
    let u = eig.eigenvectors.column(idx[0]).into_owned();
    let k = (0..n).max_by(|&a, &b| u[a].norm().total_cmp(&u[b].norm())).unwrap_or(0);
    let phase = u[k] / c(u[k].norm());
    let w = u * (phase.conj() * c(l1.sqrt()));
    (w, l2 / l1)
}

pub fn extract_beamformers(w: &[CMat]) -> (Vec<CVec>, Vec<f64>) {
    w.iter().map(extract_beamformer).unzip()
}

fn quad(a: &CVec, w: &CVec) -> f64 {
    a.dotc(w).norm_sqr()
}

/// Leakage `wᴴ G Z⁻¹ Gᴴ w / sigma_j^2` with `Z = I + (GᴴVG + Psi)/sigma_j^2`.
pub fn eve_leakage(g: &CMat, w: &CVec, v: &CMat, interferers: &[CVec], noise: f64) -> f64 {
    let nj = g.ncols();
    let gh = g.adjoint();
    let mut z = &gh * v * g;
    for x in interferers {
        let y = &gh * x;
        z += &y * y.adjoint();
    }
    let z = CMat::identity(nj, nj) + z / c(noise);
    let a = &gh * w;
    let sol = z.lu().solve(&a).unwrap_or_else(|| CVec::zeros(nj));
    a.dotc(&sol).re / noise
}

/// `log2 det(I + Z⁻¹ Gᴴ W G / sigma_j^2)` for a general PSD `W`.
pub fn eve_rate_det(g: &CMat, w: &CMat, v: &CMat, psi: &CMat, noise: f64) -> f64 {
    let nj = g.ncols();
    let gh = g.adjoint();
    let z = CMat::identity(nj, nj) + (&gh * v * g + psi) / c(noise);
    let zinv = z.try_inverse().unwrap_or_else(|| CMat::zeros(nj, nj));
    let m = CMat::identity(nj, nj) + zinv * (&gh * w * g) / c(noise);
    m.determinant().re.log2()
}

/// User SINR of stream `s` against true (or estimated) channel `h`.
pub fn user_sinr(sic: &SicTable, s: usize, h: &CVec, w: &[CVec], v: &CMat, noise: f64) -> f64 {
    let mut interf = (h.adjoint() * v * h)[(0, 0)].re;
    for s2 in 0..sic.len() {
        if s2 != s && sic.a(s, s2) {
            interf += quad(h, &w[s2]);
        }
    }
    quad(h, &w[s]) / (noise + interf)
}

fn eve_interferers(sic: &SicTable, requests: &RequestSet, q: &CachePlacement, s0: usize, j: usize, w: &[CVec]) -> Vec<CVec> {
    (0..sic.len())
        .filter(|&s2| {
            let (r2, l2) = sic.streams[s2];
            s2 != s0 && sic.a(s0, s2) && !q.get(requests.requests[r2].file, l2, j)
        })
        .map(|s2| w[s2].clone())
        .collect()
}

pub fn evaluate_rates(
    topo: &NetworkTopology,
    requests: &RequestSet,
    h: &[CVec],
    g: &[CMat],
    w: &[CVec],
    v: &CMat,
    q: &CachePlacement,
    sic: &SicTable,
) -> RateReport {
    let sinr: Vec<f64> =
        (0..sic.len()).map(|s| user_sinr(sic, s, &h[sic.streams[s].0], w, v, topo.noise_user)).collect();
    let user: Vec<f64> = sinr.iter().map(|x| (1.0 + x).log2()).collect();
    let base_streams: Vec<usize> = (0..sic.len()).filter(|&s| sic.streams[s].1 == 0).collect();
    let mut leakage = Vec::new();
    let mut eve = Vec::new();
    let mut secrecy = Vec::new();
    for &s0 in &base_streams {
        let lk: Vec<f64> = topo
            .untrusted()
            .enumerate()
            .map(|(jj, j)| {
                let inter = eve_interferers(sic, requests, q, s0, j, w);
                eve_leakage(&g[jj], &w[s0], v, &inter, topo.noise_eve)
            })
            .collect();
        let rates: Vec<f64> = lk.iter().map(|x| (1.0 + x).log2()).collect();
        let worst = rates.iter().cloned().fold(0.0, f64::max);
        secrecy.push(secrecy_rate(user[s0], worst));
        leakage.push(lk);
        eve.push(rates);
    }
    RateReport { sinr, user, leakage, eve, secrecy, base_streams }
}

/// `[R - max_j R_j]⁺`.
pub fn secrecy_rate(user: f64, worst_eve: f64) -> f64 {
    (user - worst_eve).max(0.0)
}

/// First violated QoS or secrecy target in `rep`, with absolute tolerance `tol`.
pub fn violated(rep: &RateReport, requests: &RequestSet, sic: &SicTable, topo: &NetworkTopology, tol: f64) -> Option<String> {
    for (s, &x) in rep.sinr.iter().enumerate() {
        let (r, l) = sic.streams[s];
        if x < requests.requests[r].eta_req(l) - tol {
            return Some(format!("C6 r{r} l{l}"));
        }
    }
    for (b, &s0) in rep.base_streams.iter().enumerate() {
        let r = sic.streams[s0].0;
        for (jj, j) in topo.untrusted().enumerate() {
            if rep.leakage[b][jj] > requests.requests[r].eta_tol() + tol {
                return Some(format!("C7 r{r} j{j}"));
            }
        }
    }
    None
}

/// Constraint with the most negative contribution to the Farkas certificate.
fn certificate_tag(sp: &Subproblem, sol: &Solution) -> String {
    let mut best = (0.0, String::from("unknown"));
    for (i, con) in sp.problem.constraints.iter().enumerate() {
        let v = match &con.kind {
            ConstraintKind::Le { expr, rhs } => (rhs - expr.constant) * sol.duals[i].scalar(),
            ConstraintKind::Eq { expr, rhs } => (rhs - expr.constant) * sol.duals[i].scalar(),
            ConstraintKind::Lmi { expr } => (&expr.constant * sol.duals[i].matrix()).trace().re,
        };
        if v < best.0 {
            best = (v, con.tag.clone());
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryOptions {
    pub robust: bool,
    pub rank_tol: f64,
    pub conic_tol: f64,
    /// Tolerance on realized SINR and leakage targets.
    pub realized_tol: f64,
    /// Re-solves allowed when the optimum returned is not rank one.
    pub purify_rounds: usize,
    /// Relative power allowance of a purification re-solve.
    pub purify_slack: f64,
}

impl DeliveryOptions {
    pub fn from_solver(s: &SolverConfig, robust: bool) -> Self {
        DeliveryOptions { robust, rank_tol: s.rank_tol, conic_tol: s.conic_tol, realized_tol: 1e-6, purify_rounds: 2, purify_slack: 1e-6 }
    }
}

/// Solves the Eliminated-mode subproblem for one slot and evaluates it on the true channels.
pub fn solve_delivery(
    topo: &NetworkTopology,
    lib: &VideoLibrary,
    requests: &RequestSet,
    slot: &ChannelSlot,
    q: &CachePlacement,
    opts: &DeliveryOptions,
) -> Result<DeliveryOutcome> {
    let sic = sic_table(requests);
    let n = topo.total_antennas();
    q.validate(topo, lib)?;
    for &(r, l) in &sic.streams {
        if q.coop(requests.requests[r].file, l).is_empty() {
            let reason = OutageReason::Infeasible { tag: format!("C6 r{r} l{l}") };
            return Ok(DeliveryOutcome::outage(sic, reason, n));
        }
    }
    let bo = BuildOptions { mode: Mode::Eliminated, mu: 1.0, robust: opts.robust };
    let sp = assemble_subproblem(topo, lib, requests, slot, q, &bo)?;
    let sol = conic::solve(&sp.problem, opts.conic_tol)?;
    match &sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            let mut o = DeliveryOutcome::outage(sic, OutageReason::Infeasible { tag: certificate_tag(&sp, &sol) }, n);
            o.iterations = sol.iterations;
            return Ok(o);
        }
        SolveStatus::Unbounded => {
            let reason = OutageReason::Numerical { message: "unbounded".into() };
            return Ok(DeliveryOutcome::outage(sic, reason, n));
        }
        SolveStatus::NumericalFailure(m) => {
            let mut o = DeliveryOutcome::outage(sic, OutageReason::Numerical { message: m.clone() }, n);
            o.iterations = sol.iterations;
            return Ok(o);
        }
    }
    let (sol, rounds) = purify(&sp, sol, opts);
    let mut out = finish(topo, requests, slot, q, &sp, &sol, opts);
    out.purify_rounds = rounds;
    Ok(out)
}

fn worst_ratio(sp: &Subproblem, sol: &Solution) -> f64 {
    sp.w.iter()
        .filter_map(|l| l.var.map(|v| extract_beamformer(sol.value(v).matrix()).1))
        .fold(0.0, f64::max)
}

/// Interior-point methods stop near the analytic center of the optimal face,
/// which has maximal rank when the optimum is not unique. While some W is not
/// rank one, re-solve with the power capped at `(1 + purify_slack)` times the
/// optimum, minimizing the energy of each W outside its principal direction.
fn purify(sp: &Subproblem, sol: Solution, opts: &DeliveryOptions) -> (Solution, usize) {
    let mut best = sol;
    let mut ratio = worst_ratio(sp, &best);
    let cap = best.primal_objective * (1.0 + opts.purify_slack);
    let mut rounds = 0;
    while ratio > opts.rank_tol && rounds < opts.purify_rounds {
        rounds += 1;
        let mut p = sp.problem.clone();
        let power = p.objective.clone();
        p.add_le("purify power cap", power, cap);
        let mut e = ScalarExpr::new();
        for l in &sp.w {
            let Some(v) = l.var else { continue };
            let (u, _) = extract_beamformer(best.value(v).matrix());
            let nrm = u.norm();
            if nrm == 0.0 {
                continue;
            }
            let u = u / Complex64::new(nrm, 0.0);
            let k = u.len();
            e = e.inner(v, CMat::identity(k, k) - &u * u.adjoint());
        }
        p.set_objective(e);
        let Ok(s2) = conic::solve(&p, opts.conic_tol) else { break };
        if s2.status != SolveStatus::Optimal {
            break;
        }
        let r2 = worst_ratio(sp, &s2);
        if r2 >= ratio {
            break;
        }
        best = s2;
        ratio = r2;
    }
    (best, rounds)
}

fn finish(
    topo: &NetworkTopology,
    requests: &RequestSet,
    slot: &ChannelSlot,
    q: &CachePlacement,
    sp: &Subproblem,
    sol: &Solution,
    opts: &DeliveryOptions,
) -> DeliveryOutcome {
    let w = sp.w_values(sol);
    let v = sp.v_value(sol);
    let nu = topo.untrusted().len();
    let wbar = (0..w.len()).map(|s| (0..nu).map(|jj| sp.wbar_value(sol, s, jj)).collect()).collect();
    let (beamformers, rank_ratios) = extract_beamformers(&w);
    let total_power = sp.total_power(sol);
    let estimated = evaluate_rates(topo, requests, &slot.h_hat, &slot.g_hat, &beamformers, &v, q, &sp.sic);
    let realized = evaluate_rates(topo, requests, &slot.h, &slot.g, &beamformers, &v, q, &sp.sic);
    let slack = sp.slacks(sol).into_iter().fold(0.0, f64::max);
    let status = if let Some((s, &ratio)) = rank_ratios.iter().enumerate().find(|(_, &x)| x > opts.rank_tol) {
        DeliveryStatus::Outage { reason: OutageReason::Rank { stream: s, ratio } }
    } else if slack > 1e-6 * topo.p_total() {
        DeliveryStatus::Outage { reason: OutageReason::Slack { value: slack } }
    } else if let Some(tag) = violated(&realized, requests, &sp.sic, topo, opts.realized_tol) {
        DeliveryStatus::Outage { reason: OutageReason::Realized { tag } }
    } else {
        DeliveryStatus::Served
    };
    DeliveryOutcome {
        status,
        sic: sp.sic.clone(),
        w,
        wbar,
        v,
        beamformers,
        rank_ratios,
        total_power,
        purify_rounds: 0,
        estimated: Some(estimated),
        realized: Some(realized),
        iterations: sol.iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SoundnessReport {
    pub samples: usize,
    pub c6_violations: usize,
    pub c7_violations: usize,
    /// Smallest `sinr - eta_req` seen.
    pub worst_c6_margin: f64,
    /// Smallest `eta_tol - leakage` seen.
    pub worst_c7_margin: f64,
}

/// Monte-Carlo check of the worst-case constraints with the outcome's beamformers.
pub fn soundness_check(
    topo: &NetworkTopology,
    requests: &RequestSet,
    slot: &ChannelSlot,
    q: &CachePlacement,
    out: &DeliveryOutcome,
    samples: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
    sampling: ErrorSampling,
) -> SoundnessReport {
    let sic = &out.sic;
    let w = &out.beamformers;
    let mut rep = SoundnessReport {
        samples,
        worst_c6_margin: f64::INFINITY,
        worst_c7_margin: f64::INFINITY,
        ..Default::default()
    };
    for (r, req) in requests.requests.iter().enumerate() {
        let streams: Vec<usize> = (0..sic.len()).filter(|&s| sic.streams[s].0 == r).collect();
        for _ in 0..samples {
            let h = &slot.h_hat[r] + sample_user_error(slot, r, rng, sampling);
            let mut bad = false;
            for &s in &streams {
                let m = user_sinr(sic, s, &h, w, &out.v, topo.noise_user) - req.eta_req(sic.streams[s].1);
                rep.worst_c6_margin = rep.worst_c6_margin.min(m);
                bad |= m < -tol;
            }
            rep.c6_violations += bad as usize;
        }
    }
    let base: Vec<usize> = (0..sic.len()).filter(|&s| sic.streams[s].1 == 0).collect();
    for (jj, j) in topo.untrusted().enumerate() {
        for _ in 0..samples {
            let g = &slot.g_hat[jj] + sample_eve_error(topo, slot, jj, rng, sampling);
            let mut bad = false;
            for &s0 in &base {
                let r = sic.streams[s0].0;
                let inter = eve_interferers(sic, requests, q, s0, j, w);
                let m = requests.requests[r].eta_tol() - eve_leakage(&g, &w[s0], &out.v, &inter, topo.noise_eve);
                rep.worst_c7_margin = rep.worst_c7_margin.min(m);
                bad |= m < -tol;
            }
            rep.c7_violations += bad as usize;
        }
    }
    rep
}
