//! Monte-Carlo driver: trials, sweep points and the metrics table.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{watts_to_dbm, Config, Scheme, SweepAxis};
use crate::delivery::{solve_delivery, DeliveryOptions, DeliveryRecord, DeliveryStatus, OutageReason};
use crate::error::{Error, Result};
use crate::gbd::{run_gbd, EvalOptions, Evaluator, GbdParams, GbdStatus, GbdTrace, Period};
use crate::greedy::{preference_placement, random_placement, run_greedy, without_untrusted_cache};
use crate::placement::CachePlacement;
use crate::scenario::{NetworkTopology, Scenario};

/// Seed of trial `trial`. Independent of scheme and sweep point, so every
/// scheme sees the same periods.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(trial as u64)
}

/// Offline result of one scheme on one period.
#[derive(Debug, Clone)]
pub struct Planned {
    pub placement: CachePlacement,
    /// GBD iterations, or greedy moves.
    pub iterations: usize,
    pub solves: usize,
    pub failures: usize,
    pub trace: Option<GbdTrace>,
    pub gbd_status: Option<GbdStatus>,
}

fn is_robust(scheme: Scheme) -> bool {
    scheme != Scheme::NonRobust
}

/// Runs the offline stage of `scheme` on the period of `sc`.
pub fn plan(cfg: &Config, scheme: Scheme, sc: &Scenario) -> Result<Planned> {
    let robust = is_robust(scheme);
    let zeroed;
    let topo: &NetworkTopology = match scheme {
        Scheme::NoUntrustedOptimal | Scheme::NoUntrustedGreedy => {
            zeroed = without_untrusted_cache(&sc.topology);
            &zeroed
        }
        _ => &sc.topology,
    };
    let simple = |placement| Planned { placement, iterations: 0, solves: 0, failures: 0, trace: None, gbd_status: None };
    match scheme {
        Scheme::Random => return Ok(simple(random_placement(topo, &sc.library, sc.seed))),
        Scheme::Preference => return Ok(simple(preference_placement(topo, &sc.library))),
        _ => {}
    }
    let period = Period { topo, lib: &sc.library, requests: &sc.requests, slots: &sc.slots };
    let mut ev = Evaluator::new(period, EvalOptions::from_solver(&cfg.solver, robust));
    match scheme {
        Scheme::Greedy | Scheme::NoUntrustedGreedy => {
            let g = run_greedy(&mut ev)?;
            Ok(Planned {
                placement: g.placement,
                iterations: g.steps.len() - 1,
                solves: ev.solves,
                failures: ev.failures,
                trace: None,
                gbd_status: None,
            })
        }
        _ => {
            let r = run_gbd(&mut ev, &GbdParams::from_solver(&cfg.solver))?;
            Ok(Planned {
                placement: r.placement,
                iterations: r.trace.iterations.len().saturating_sub(1),
                solves: ev.solves,
                failures: ev.failures,
                trace: Some(r.trace),
                gbd_status: Some(r.status),
            })
        }
    }
}

/// Online delivery of every slot in the period.
pub fn deliver(cfg: &Config, scheme: Scheme, sc: &Scenario, q: &CachePlacement) -> Result<Vec<SlotResult>> {
    let opts = DeliveryOptions::from_solver(&cfg.solver, is_robust(scheme));
    let mut out = Vec::with_capacity(sc.slots.len());
    for slot in &sc.slots {
        let o = solve_delivery(&sc.topology, &sc.library, &sc.requests, slot, q, &opts)?;
        let (n_bl, n_el) = o.coop_counts(&sc.requests, q);
        let (bl_w, el_w) = o.sic.streams.iter().fold((0, 0), |a, &(_, l)| if l == 0 { (a.0 + 1, a.1) } else { (a.0, a.1 + 1) });
        out.push(SlotResult {
            served: o.status.is_served(),
            numerical: matches!(o.status, DeliveryStatus::Outage { reason: OutageReason::Numerical { .. } }),
            power: o.total_power,
            coop_base: n_bl * bl_w as f64,
            base_requests: bl_w,
            coop_enh: n_el * el_w as f64,
            enh_requests: el_w,
            record: o.record(slot.t),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SlotResult {
    pub served: bool,
    pub numerical: bool,
    pub power: f64,
    /// Sum of cooperating BS counts over base-layer requests.
    pub coop_base: f64,
    pub base_requests: usize,
    pub coop_enh: f64,
    pub enh_requests: usize,
    pub record: DeliveryRecord,
}

/// Outcome of one trial. `slots` is empty when the offline stage failed.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub planned: Option<Planned>,
    pub slots: Vec<SlotResult>,
    pub error: Option<String>,
}

pub fn run_trial(cfg: &Config, scheme: Scheme, trial: usize) -> Result<TrialResult> {
    let seed = trial_seed(cfg.experiment.seed, trial);
    let sc = Scenario::generate(cfg, seed, cfg.experiment.slots, 0)?;
    let planned = match plan(cfg, scheme, &sc) {
        Ok(p) => p,
        Err(Error::Solver(m)) => {
            return Ok(TrialResult { trial, seed, planned: None, slots: vec![], error: Some(m) });
        }
        Err(e) => return Err(e),
    };
    let slots = deliver(cfg, scheme, &sc, &planned.placement)?;
    Ok(TrialResult { trial, seed, planned: Some(planned), slots, error: None })
}

/// Running sums over trials. `merge` is associative and commutative up to
/// floating-point rounding; trials are always folded in index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accumulator {
    pub trials: usize,
    pub failed_trials: usize,
    pub slots: usize,
    pub served: usize,
    /// Trials with at least one served slot, and sums of their mean power.
    pub power_trials: usize,
    pub power_sum: f64,
    pub power_sq: f64,
    pub pout_sum: f64,
    pub pout_sq: f64,
    pub coop_base: f64,
    pub base_requests: usize,
    pub coop_enh: f64,
    pub enh_requests: usize,
    pub iterations: usize,
    pub solves: usize,
    pub failures: usize,
}

impl Accumulator {
    pub fn add(&mut self, t: &TrialResult) {
        self.trials += 1;
        let Some(p) = &t.planned else {
            self.failed_trials += 1;
            self.failures += 1;
            self.solves += 1;
            return;
        };
        self.iterations += p.iterations;
        self.solves += p.solves + t.slots.len();
        self.failures += p.failures + t.slots.iter().filter(|s| s.numerical).count();
        let served: Vec<&SlotResult> = t.slots.iter().filter(|s| s.served).collect();
        self.slots += t.slots.len();
        self.served += served.len();
        let pout = 1.0 - served.len() as f64 / t.slots.len().max(1) as f64;
        self.pout_sum += pout;
        self.pout_sq += pout * pout;
        if !served.is_empty() {
            let m = served.iter().map(|s| s.power).sum::<f64>() / served.len() as f64;
            self.power_trials += 1;
            self.power_sum += m;
            self.power_sq += m * m;
        }
        for s in served {
            self.coop_base += s.coop_base;
            self.base_requests += s.base_requests;
            self.coop_enh += s.coop_enh;
            self.enh_requests += s.enh_requests;
        }
    }

    pub fn merge(&mut self, o: &Accumulator) {
        self.trials += o.trials;
        self.failed_trials += o.failed_trials;
        self.slots += o.slots;
        self.served += o.served;
        self.power_trials += o.power_trials;
        self.power_sum += o.power_sum;
        self.power_sq += o.power_sq;
        self.pout_sum += o.pout_sum;
        self.pout_sq += o.pout_sq;
        self.coop_base += o.coop_base;
        self.base_requests += o.base_requests;
        self.coop_enh += o.coop_enh;
        self.enh_requests += o.enh_requests;
        self.iterations += o.iterations;
        self.solves += o.solves;
        self.failures += o.failures;
    }

    pub fn row(&self, axis: &str, value: f64, scheme: Scheme) -> MetricsRow {
        let (power, power_se) = mean_se(self.power_trials, self.power_sum, self.power_sq);
        let ok = self.trials - self.failed_trials;
        let (p_out, p_out_se) = mean_se(ok, self.pout_sum, self.pout_sq);
        let ratio = |a: f64, n: usize| if n == 0 { 0.0 } else { a / n as f64 };
        MetricsRow {
            axis: axis.to_string(),
            value,
            scheme: scheme.name().to_string(),
            trials: self.trials,
            failed_trials: self.failed_trials,
            slots: self.slots,
            served: self.served,
            power_w: power,
            power_se_w: power_se,
            power_dbm: if power > 0.0 { watts_to_dbm(power) } else { f64::NAN },
            p_out,
            p_out_se,
            n_bl: ratio(self.coop_base, self.base_requests),
            n_el: ratio(self.coop_enh, self.enh_requests),
            gbd_iterations: ratio(self.iterations as f64, ok),
            solves: self.solves,
            solver_failures: self.failures,
            wall_s: 0.0,
        }
    }
}

fn mean_se(n: usize, sum: f64, sq: f64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = sum / n as f64;
    if n < 2 {
        return (m, f64::NAN);
    }
    let var = ((sq - n as f64 * m * m) / (n as f64 - 1.0)).max(0.0);
    (m, (var / n as f64).sqrt())
}

/// One line of the metrics table. Means are over trials; SEs are standard
/// errors of those means. `wall_s` is kept out of the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub axis: String,
    pub value: f64,
    pub scheme: String,
    pub trials: usize,
    pub failed_trials: usize,
    pub slots: usize,
    pub served: usize,
    /// Mean total transmit power of served slots.
    pub power_w: f64,
    pub power_se_w: f64,
    pub power_dbm: f64,
    pub p_out: f64,
    pub p_out_se: f64,
    /// Request-weighted mean cooperating BS count over served base-layer requests.
    pub n_bl: f64,
    pub n_el: f64,
    /// Mean offline iterations per trial (GBD iterations or greedy moves).
    pub gbd_iterations: f64,
    pub solves: usize,
    pub solver_failures: usize,
    #[serde(skip)]
    pub wall_s: f64,
}

pub const CSV_COLUMNS: [&str; 18] = [
    "axis",
    "value",
    "scheme",
    "trials",
    "failed_trials",
    "slots",
    "served",
    "power_w",
    "power_se_w",
    "power_dbm",
    "p_out",
    "p_out_se",
    "n_bl",
    "n_el",
    "gbd_iterations",
    "solves",
    "solver_failures",
    "wall_s",
];

impl MetricsRow {
    fn fields(&self, with_time: bool) -> Vec<String> {
        let f = |x: f64| format!("{x:.9e}");
        let mut v = vec![
            self.axis.clone(),
            format!("{}", self.value),
            self.scheme.clone(),
            self.trials.to_string(),
            self.failed_trials.to_string(),
            self.slots.to_string(),
            self.served.to_string(),
            f(self.power_w),
            f(self.power_se_w),
            format!("{:.4}", self.power_dbm),
            f(self.p_out),
            f(self.p_out_se),
            format!("{:.6}", self.n_bl),
            format!("{:.6}", self.n_el),
            format!("{:.3}", self.gbd_iterations),
            self.solves.to_string(),
            self.solver_failures.to_string(),
        ];
        if with_time {
            v.push(format!("{:.3}", self.wall_s));
        }
        v
    }
}

/// Streams metrics rows as CSV. The metrics file has no timing column, so
/// identical configs give identical bytes; wall time goes to a separate writer.
pub struct MetricsWriter<W: std::io::Write> {
    csv: csv::Writer<W>,
    with_time: bool,
}

impl<W: std::io::Write> MetricsWriter<W> {
    pub fn new(w: W, with_time: bool) -> Result<Self> {
        let mut csv = csv::Writer::from_writer(w);
        let n = if with_time { CSV_COLUMNS.len() } else { CSV_COLUMNS.len() - 1 };
        csv.write_record(&CSV_COLUMNS[..n])?;
        Ok(MetricsWriter { csv, with_time })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.csv.write_record(row.fields(self.with_time))?;
        self.csv.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.csv.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = MetricsWriter::new(Vec::new(), false)?;
    for r in rows {
        w.write(r)?;
    }
    Ok(String::from_utf8_lossy(&w.into_inner()?).into_owned())
}

/// Copy of `cfg` with the sweep axis set to `value`.
pub fn apply_axis(cfg: &Config, axis: SweepAxis, value: f64) -> Result<Config> {
    let mut c = cfg.clone();
    let count = |v: f64| {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("{} takes whole numbers, got {v}", axis.name())))
        }
    };
    match axis {
        SweepAxis::SmallCacheMb => {
            c.topology.small_cache_mb = value;
            c.topology.small_cache_mb_each = None;
        }
        SweepAxis::SigmaEve => c.uncertainty.sigma_eve = value,
        SweepAxis::Untrusted => c.topology.untrusted = count(value)?,
        SweepAxis::Users => c.requests.users = count(value)?,
    }
    c.sweep = None;
    c.validate()?;
    Ok(c)
}

/// Point label of a config without a sweep section.
pub const SINGLE_POINT: &str = "point";

pub struct PointResult {
    pub row: MetricsRow,
    pub trials: Vec<TrialResult>,
}

fn check_budget(cfg: &Config, acc: &Accumulator) -> Result<()> {
    let attempts = acc.solves.max(1);
    if acc.failures as f64 > cfg.solver.failure_budget * attempts as f64 {
        return Err(Error::FailureBudget { failures: acc.failures, attempts, budget: cfg.solver.failure_budget });
    }
    Ok(())
}

/// All trials of one scheme at one point. Fails when solver failures exceed the budget.
pub fn run_point(cfg: &Config, scheme: Scheme, axis: &str, value: f64) -> Result<PointResult> {
    let start = Instant::now();
    let mut acc = Accumulator::default();
    let mut trials = Vec::with_capacity(cfg.experiment.trials);
    for k in 0..cfg.experiment.trials {
        let t = run_trial(cfg, scheme, k)?;
        acc.add(&t);
        trials.push(t);
    }
    check_budget(cfg, &acc)?;
    let mut row = acc.row(axis, value, scheme);
    row.wall_s = start.elapsed().as_secs_f64();
    Ok(PointResult { row, trials })
}

/// Schemes of a sweep; the experiment scheme when the sweep names none.
pub fn sweep_schemes(cfg: &Config) -> Vec<Scheme> {
    match &cfg.sweep {
        Some(s) if !s.schemes.is_empty() => s.schemes.clone(),
        _ => vec![cfg.experiment.scheme],
    }
}

/// One row per (value, scheme), handed to `emit` as soon as it is computed.
pub fn run_sweep(cfg: &Config, mut emit: impl FnMut(&MetricsRow) -> Result<()>) -> Result<Vec<MetricsRow>> {
    let Some(sw) = &cfg.sweep else {
        return Err(Error::Config("no sweep section".into()));
    };
    if sw.values.is_empty() {
        return Err(Error::Config("sweep axis has no values".into()));
    }
    let mut rows = Vec::new();
    for &v in &sw.values {
        let c = apply_axis(cfg, sw.axis, v)?;
        for scheme in sweep_schemes(cfg) {
            let p = run_point(&c, scheme, sw.axis.name(), v)?;
            emit(&p.row)?;
            rows.push(p.row);
        }
    }
    Ok(rows)
}
