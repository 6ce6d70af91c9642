//! Generalized Benders decomposition over the cache placement with
//! penalized SDP subproblems and affine optimality cuts.

use std::collections::HashMap;
use std::time::Instant;

use conic::SolveStatus;
use serde::{Deserialize, Serialize};

use crate::builder::{assemble_subproblem, extract_duals, BuildOptions, Mode};
use crate::config::{SolverConfig, MB_BITS};
use crate::error::{Error, Result};
use crate::milp::{solve_master, Cut, MasterProblem};
use crate::placement::CachePlacement;
use crate::scenario::{ChannelSlot, NetworkTopology, RequestSet, VideoLibrary};

/// One caching period: the offline stage optimizes over its T_0 slots.
#[derive(Debug, Clone, Copy)]
pub struct Period<'a> {
    pub topo: &'a NetworkTopology,
    pub lib: &'a VideoLibrary,
    pub requests: &'a RequestSet,
    pub slots: &'a [ChannelSlot],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub mu_factor: f64,
    pub conic_tol: f64,
    pub robust: bool,
}

impl EvalOptions {
    pub fn from_solver(s: &SolverConfig, robust: bool) -> Self {
        EvalOptions { mu_factor: s.mu_factor, conic_tol: s.conic_tol, robust }
    }
}

/// Sum over the period of the Slacked subproblem at one q.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// nu(q) in watts; infinite when some slot is infeasible or failed.
    pub nu: f64,
    pub power: f64,
    pub penalty: f64,
    /// Largest single slack (watts).
    pub max_slack: f64,
    pub cut: Option<Cut>,
    pub failed: bool,
}

impl Evaluation {
    pub fn is_finite(&self) -> bool {
        self.nu.is_finite()
    }
}

/// Memoized nu(q) with solve counters.
pub struct Evaluator<'a> {
    pub period: Period<'a>,
    pub opts: EvalOptions,
    memo: HashMap<CachePlacement, Evaluation>,
    pub solves: usize,
    pub failures: usize,
    /// Distinct placements evaluated.
    pub evaluations: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(period: Period<'a>, opts: EvalOptions) -> Self {
        Evaluator { period, opts, memo: HashMap::new(), solves: 0, failures: 0, evaluations: 0 }
    }

    pub fn mu(&self) -> f64 {
        self.opts.mu_factor * self.period.topo.p_total()
    }

    pub fn cached(&self, q: &CachePlacement) -> Option<&Evaluation> {
        self.memo.get(q)
    }

    pub fn evaluate(&mut self, q: &CachePlacement) -> Result<Evaluation> {
        if let Some(e) = self.memo.get(q) {
            return Ok(e.clone());
        }
        let e = self.compute(q)?;
        self.evaluations += 1;
        self.memo.insert(q.clone(), e.clone());
        Ok(e)
    }

    fn compute(&mut self, q: &CachePlacement) -> Result<Evaluation> {
        let Period { topo, lib, requests, slots } = self.period;
        let bo = BuildOptions { mode: Mode::Slacked, mu: self.mu(), robust: self.opts.robust };
        let n = q.len();
        let mut out = Evaluation { nu: 0.0, power: 0.0, penalty: 0.0, max_slack: 0.0, cut: None, failed: false };
        let mut coef = vec![0.0; n];
        let p_max = topo.p_total();
        for slot in slots {
            let sp = assemble_subproblem(topo, lib, requests, slot, q, &bo)?;
            let sol = conic::solve(&sp.problem, self.opts.conic_tol)?;
            self.solves += 1;
            match sol.status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible => {
                    out.nu = f64::INFINITY;
                    return Ok(out);
                }
                _ => {
                    self.failures += 1;
                    out.nu = f64::INFINITY;
                    out.failed = true;
                    return Ok(out);
                }
            }
            out.nu += sol.primal_objective * sp.p_unit;
            out.power += sp.total_power(&sol);
            out.penalty += sp.penalty(&sol);
            out.max_slack = sp.slacks(&sol).into_iter().fold(out.max_slack, f64::max);
            let d = extract_duals(&sp, &sol)?;
            for (b, lam) in sp.c3.iter().zip(&d.c3) {
                coef[q.index(b.file, b.layer, b.bs)] -= lam * b.power;
            }
            for (b, lam) in sp.c8.iter().zip(&d.c8) {
                coef[q.index(b.file, b.layer, b.bs)] -= lam * p_max;
            }
            for (b, lam) in sp.c9.iter().zip(&d.c9) {
                coef[q.index(b.file, b.layer, b.bs)] += lam * p_max;
            }
        }
        out.cut = Some(Cut { anchor: q.bits().to_vec(), value: out.nu, coef, iteration: 0 });
        Ok(out)
    }
}

/// Free bits and knapsacks: requested files only, C1 and single-item capacity applied.
pub fn master_structure(topo: &NetworkTopology, lib: &VideoLibrary, requests: &RequestSet) -> MasterProblem {
    let q = CachePlacement::for_scenario(topo, lib);
    let files = requests.requested_files();
    let mut free = Vec::new();
    let mut knapsacks = vec![(Vec::new(), 0.0); topo.num_bs];
    for m in 0..topo.num_bs {
        knapsacks[m].1 = topo.cache_bits[m] / MB_BITS;
    }
    for &f in &files {
        for l in 0..lib.layers {
            for m in 0..topo.num_bs {
                if l == 0 && !topo.is_trusted(m) {
                    continue;
                }
                let w = lib.subfile_bits[f][l] / MB_BITS;
                if w > knapsacks[m].1 * (1.0 + 1e-12) {
                    continue;
                }
                let i = q.index(f, l, m);
                free.push(i);
                knapsacks[m].0.push((i, w));
            }
        }
    }
    free.sort_unstable();
    MasterProblem { n_bits: q.len(), free, knapsacks }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GbdStatus {
    Optimal,
    /// Nonzero slacks at the optimum, or an infeasible subproblem.
    Infeasible,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdIteration {
    pub iteration: usize,
    pub q: String,
    pub lb: f64,
    pub ub: f64,
    pub nu: f64,
    pub time_s: f64,
    pub master_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdTrace {
    pub iterations: Vec<GbdIteration>,
    pub status: GbdStatus,
}

impl GbdTrace {
    /// CSV with columns iteration, lb, ub, nu, time_s.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iteration", "lb", "ub", "nu", "time_s"])?;
        for it in &self.iterations {
            w.write_record([
                it.iteration.to_string(),
                it.lb.to_string(),
                it.ub.to_string(),
                it.nu.to_string(),
                format!("{:.6}", it.time_s),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdParams {
    /// Relative gap: stop when UB <= LB + tol (1 + |UB|).
    pub tol: f64,
    pub iter_cap: usize,
    /// Slack tolerance as a fraction of P_max.
    pub slack_tol: f64,
    pub master_tol: f64,
}

impl GbdParams {
    pub fn from_solver(s: &SolverConfig) -> Self {
        GbdParams { tol: s.gbd_tol, iter_cap: s.gbd_iter_cap, slack_tol: s.slack_tol, master_tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct GbdResult {
    pub placement: CachePlacement,
    pub status: GbdStatus,
    pub objective: f64,
    pub evaluation: Evaluation,
    pub trace: GbdTrace,
    pub cuts: Vec<Cut>,
    /// Every placement evaluated, in order.
    pub visited: Vec<CachePlacement>,
}

pub fn gap_tol(params: &GbdParams, ub: f64) -> f64 {
    if params.tol.is_infinite() {
        f64::INFINITY
    } else {
        params.tol * (1.0 + ub.abs())
    }
}

pub fn run_gbd(ev: &mut Evaluator, params: &GbdParams) -> Result<GbdResult> {
    let start = Instant::now();
    let Period { topo, lib, requests, .. } = ev.period;
    let mp = master_structure(topo, lib, requests);
    let p_max = topo.p_total();
    let q0 = CachePlacement::for_scenario(topo, lib);
    let e0 = ev.evaluate(&q0)?;
    let mut trace = GbdTrace { iterations: Vec::new(), status: GbdStatus::Optimal };
    let mut visited = vec![q0.clone()];
    if e0.failed {
        return Err(Error::Solver("subproblem failed at q = 0".into()));
    }
    let Some(cut0) = e0.cut.clone() else {
        trace.status = GbdStatus::Infeasible;
        trace.iterations.push(GbdIteration {
            iteration: 0,
            q: q0.to_string(),
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            nu: f64::INFINITY,
            time_s: start.elapsed().as_secs_f64(),
            master_nodes: 0,
        });
        return Ok(GbdResult {
            placement: q0,
            status: GbdStatus::Infeasible,
            objective: f64::INFINITY,
            evaluation: e0,
            trace,
            cuts: vec![],
            visited,
        });
    };
    let mut cuts = vec![cut0];
    let mut ub = e0.nu;
    let mut best = (q0.clone(), e0.clone());
    let mut lb = f64::NEG_INFINITY;
    trace.iterations.push(GbdIteration {
        iteration: 0,
        q: q0.to_string(),
        lb,
        ub,
        nu: e0.nu,
        time_s: start.elapsed().as_secs_f64(),
        master_nodes: 0,
    });
    let mut status = GbdStatus::IterationCap;
    for k in 1..=params.iter_cap {
        let incumbents: Vec<Vec<bool>> = visited.iter().map(|q| q.bits().to_vec()).collect();
        let Some(ms) = solve_master(&mp, &cuts, &incumbents, params.master_tol)? else {
            return Err(Error::Placement("C1/C2 admit no placement".into()));
        };
        lb = lb.max(ms.alpha);
        let qk = CachePlacement::from_bits(q0.files, q0.layers, q0.bs, ms.q);
        if ub <= lb + gap_tol(params, ub) {
            trace.iterations.push(GbdIteration {
                iteration: k,
                q: qk.to_string(),
                lb,
                ub,
                nu: f64::NAN,
                time_s: start.elapsed().as_secs_f64(),
                master_nodes: ms.nodes,
            });
            status = GbdStatus::Optimal;
            break;
        }
        let ek = ev.evaluate(&qk)?;
        if ek.failed {
            return Err(Error::Solver(format!("subproblem failed at q = {qk}")));
        }
        if !visited.contains(&qk) {
            visited.push(qk.clone());
        }
        if ek.nu < ub {
            ub = ek.nu;
            best = (qk.clone(), ek.clone());
        }
        trace.iterations.push(GbdIteration {
            iteration: k,
            q: qk.to_string(),
            lb,
            ub,
            nu: ek.nu,
            time_s: start.elapsed().as_secs_f64(),
            master_nodes: ms.nodes,
        });
        if ek.nu <= ms.alpha + gap_tol(params, ub) {
            status = GbdStatus::Optimal;
            break;
        }
        if let Some(mut c) = ek.cut.clone() {
            c.iteration = k;
            cuts.push(c);
        }
    }
    if best.1.max_slack > params.slack_tol * p_max {
        status = GbdStatus::Infeasible;
    }
    trace.status = status;
    Ok(GbdResult { placement: best.0, status, objective: ub, evaluation: best.1, trace, cuts, visited })
}
