//! Branch-and-bound master: `min alpha s.t. alpha >= cut_i(q)`, knapsacks, q binary.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use conic::{ConicProblem, ScalarExpr, SolveStatus, VarKind};

use crate::error::{Error, Result};

/// An affine under-estimator `value + Σ coef_i (q_i - anchor_i)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Cut {
    pub anchor: Vec<bool>,
    pub value: f64,
    pub coef: Vec<f64>,
    pub iteration: usize,
}

impl Cut {
    pub fn constant(value: f64, n: usize) -> Self {
        Cut { anchor: vec![false; n], value, coef: vec![0.0; n], iteration: 0 }
    }

    pub fn eval(&self, q: &[bool]) -> f64 {
        let mut v = self.value;
        for i in 0..q.len() {
            if q[i] != self.anchor[i] {
                v += if q[i] { self.coef[i] } else { -self.coef[i] };
            }
        }
        v
    }

    pub fn eval_real(&self, q: &[f64]) -> f64 {
        self.value + (0..q.len()).map(|i| self.coef[i] * (q[i] - f64::from(u8::from(self.anchor[i])))).sum::<f64>()
    }
}

/// Binary structure of the master: which bits are free and the knapsack rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterProblem {
    pub n_bits: usize,
    /// Bits the master may set; every other bit is fixed at 0.
    pub free: Vec<usize>,
    /// `(entries (bit, weight), capacity)`.
    pub knapsacks: Vec<(Vec<(usize, f64)>, f64)>,
}

impl MasterProblem {
    pub fn is_feasible(&self, q: &[bool]) -> bool {
        if q.len() != self.n_bits {
            return false;
        }
        let mut allowed = vec![false; self.n_bits];
        for &i in &self.free {
            allowed[i] = true;
        }
        if q.iter().zip(&allowed).any(|(&b, &a)| b && !a) {
            return false;
        }
        self.knapsacks
            .iter()
            .all(|(row, cap)| row.iter().filter(|(i, _)| q[*i]).map(|(_, w)| w).sum::<f64>() <= cap * (1.0 + 1e-12) + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub q: Vec<bool>,
    pub alpha: f64,
    pub nodes: usize,
    pub lp_solves: usize,
}

pub fn max_cut(cuts: &[Cut], q: &[bool]) -> f64 {
    cuts.iter().map(|c| c.eval(q)).fold(f64::NEG_INFINITY, f64::max)
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fix: Vec<Option<bool>>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // Max-heap: smaller bound first, then deeper, then older.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&o.depth))
            .then(o.seq.cmp(&self.seq))
    }
}

enum Relax {
    Infeasible,
    Bound(f64, Vec<f64>),
}

fn relax(mp: &MasterProblem, cuts: &[Cut], fix: &[Option<bool>], tol: f64) -> Result<Relax> {
    let nf = mp.free.len();
    let mut base = vec![false; mp.n_bits];
    for (k, &i) in mp.free.iter().enumerate() {
        base[i] = fix[k] == Some(true);
    }
    let open: Vec<usize> = (0..nf).filter(|&k| fix[k].is_none()).collect();
    for (row, cap) in &mp.knapsacks {
        let used: f64 = row.iter().filter(|(i, _)| base[*i]).map(|(_, w)| w).sum();
        if used > cap * (1.0 + 1e-12) + 1e-12 {
            return Ok(Relax::Infeasible);
        }
    }
    if open.is_empty() {
        let v = max_cut(cuts, &base);
        return Ok(Relax::Bound(v, vec![]));
    }
    // Cuts are normalized by their largest magnitude; alpha is reported back in watts.
    let scale = cuts
        .iter()
        .flat_map(|c| std::iter::once(c.value.abs()).chain(c.coef.iter().map(|g| g.abs())))
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut p = ConicProblem::new();
    let alpha = p.add_var("alpha", VarKind::Free);
    let x: Vec<_> = open.iter().map(|&k| p.add_var(format!("q{}", mp.free[k]), VarKind::NonNeg)).collect();
    p.set_objective(ScalarExpr::new().var(alpha, 1.0));
    for (k, &xi) in x.iter().enumerate() {
        p.add_le(format!("ub {}", mp.free[open[k]]), ScalarExpr::new().var(xi, 1.0), 1.0);
    }
    for (ci, c) in cuts.iter().enumerate() {
        let mut e = ScalarExpr::new().var(alpha, -1.0);
        for (k, &xi) in x.iter().enumerate() {
            let g = c.coef[mp.free[open[k]]] / scale;
            if g != 0.0 {
                e = e.var(xi, g);
            }
        }
        let mut q0 = base.clone();
        for &k in &open {
            q0[mp.free[k]] = false;
        }
        p.add_le(format!("cut {ci}"), e, -c.eval(&q0) / scale);
    }
    let mut pos = vec![usize::MAX; mp.n_bits];
    for (k, &oi) in open.iter().enumerate() {
        pos[mp.free[oi]] = k;
    }
    for (r, (row, cap)) in mp.knapsacks.iter().enumerate() {
        let used: f64 = row.iter().filter(|(i, _)| base[*i]).map(|(_, w)| w).sum();
        let mut e = ScalarExpr::new();
        for &(i, w) in row {
            if pos[i] != usize::MAX {
                e = e.var(x[pos[i]], w);
            }
        }
        if !e.terms.is_empty() {
            p.add_le(format!("knapsack {r}"), e, cap - used);
        }
    }
    let sol = conic::solve(&p, tol)?;
    match sol.status {
        SolveStatus::Optimal => {
            let mut full = vec![0.0; nf];
            for k in 0..nf {
                full[k] = match fix[k] {
                    Some(b) => f64::from(u8::from(b)),
                    None => 0.0,
                };
            }
            for (k, &oi) in open.iter().enumerate() {
                full[oi] = sol.value(x[k]).scalar().clamp(0.0, 1.0);
            }
            Ok(Relax::Bound(sol.dual_objective.min(sol.primal_objective) * scale, full))
        }
        SolveStatus::Infeasible => Ok(Relax::Infeasible),
        SolveStatus::Unbounded => Err(Error::Solver("master relaxation unbounded".into())),
        SolveStatus::NumericalFailure(m) => Err(Error::Solver(format!("master relaxation: {m}"))),
    }
}

/// Globally optimal master solution, or `None` when the binary set is empty.
pub fn solve_master(
    mp: &MasterProblem,
    cuts: &[Cut],
    incumbents: &[Vec<bool>],
    tol: f64,
) -> Result<Option<MasterSolution>> {
    if cuts.is_empty() {
        return Err(Error::Solver("master needs at least one cut".into()));
    }
    let nf = mp.free.len();
    let mut best: Option<(f64, Vec<bool>)> = None;
    for q in incumbents {
        if mp.is_feasible(q) {
            let v = max_cut(cuts, q);
            if best.as_ref().map_or(true, |b| v < b.0) {
                best = Some((v, q.clone()));
            }
        }
    }
    let prune = |bound: f64, best: &Option<(f64, Vec<bool>)>| match best {
        Some((v, _)) => bound >= v - 1e-9 * (1.0 + v.abs()),
        None => false,
    };
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node { bound: f64::NEG_INFINITY, depth: 0, seq, fix: vec![None; nf] });
    let mut nodes = 0;
    let mut lp_solves = 0;
    while let Some(node) = heap.pop() {
        if prune(node.bound, &best) {
            continue;
        }
        nodes += 1;
        lp_solves += 1;
        let (bound, xs) = match relax(mp, cuts, &node.fix, tol)? {
            Relax::Infeasible => continue,
            Relax::Bound(b, xs) => (b, xs),
        };
        if prune(bound, &best) {
            continue;
        }
        let frac = (0..nf)
            .filter(|&k| node.fix[k].is_none())
            .map(|k| (k, (xs[k] - 0.5).abs()))
            .filter(|&(_, d)| d < 0.5 - 1e-6)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match frac {
            None => {
                let mut q = vec![false; mp.n_bits];
                for k in 0..nf {
                    q[mp.free[k]] = match node.fix[k] {
                        Some(b) => b,
                        None => xs[k] > 0.5,
                    };
                }
                if mp.is_feasible(&q) {
                    let v = max_cut(cuts, &q);
                    if best.as_ref().map_or(true, |b| v < b.0) {
                        best = Some((v, q));
                    }
                    continue;
                }
                // Rounding broke a knapsack; branch on the first open bit.
                if let Some(k) = (0..nf).find(|&k| node.fix[k].is_none()) {
                    for b in [false, true] {
                        let mut fix = node.fix.clone();
                        fix[k] = Some(b);
                        seq += 1;
                        heap.push(Node { bound, depth: node.depth + 1, seq, fix });
                    }
                }
            }
            Some((k, _)) => {
                for b in [false, true] {
                    let mut fix = node.fix.clone();
                    fix[k] = Some(b);
                    seq += 1;
                    heap.push(Node { bound, depth: node.depth + 1, seq, fix });
                }
            }
        }
    }
    Ok(best.map(|(alpha, q)| MasterSolution { q, alpha, nodes, lp_solves }))
}
