//! Single-flip greedy cache placement and the heuristic baselines.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gbd::{Evaluation, Evaluator, Period};
use crate::placement::CachePlacement;
use crate::scenario::{stream_rng, NetworkTopology, VideoLibrary};

/// Candidates at Hamming distance <= 1 on BS `m`'s row over `files`, C1/C2 kept.
/// The current placement comes first, then flips in (file, layer) order.
pub fn neighborhood(
    q: &CachePlacement,
    m: usize,
    topo: &NetworkTopology,
    lib: &VideoLibrary,
    files: &[usize],
) -> Vec<CachePlacement> {
    let mut out = vec![q.clone()];
    let used = q.used_bits(lib, m);
    for &f in files {
        for l in 0..lib.layers {
            if q.get(f, l, m) {
                let mut c = q.clone();
                c.set(f, l, m, false);
                out.push(c);
            } else {
                if l == 0 && !topo.is_trusted(m) {
                    continue;
                }
                if used + lib.subfile_bits[f][l] > topo.cache_bits[m] * (1.0 + 1e-12) {
                    continue;
                }
                let mut c = q.clone();
                c.set(f, l, m, true);
                out.push(c);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub sweep: usize,
    pub bs: usize,
    pub q: String,
    pub nu: f64,
}

#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub placement: CachePlacement,
    pub evaluation: Evaluation,
    pub steps: Vec<GreedyStep>,
    /// Distinct placements evaluated.
    pub evaluations: usize,
    /// M L^2 |F_S|^2.
    pub bound: usize,
    pub skipped: usize,
}

fn better(a: f64, b: f64) -> bool {
    a < b - 1e-9 * (1.0 + b.abs())
}

/// Sweeps BSs in ascending order, moving each to its best neighbor, until a
/// full sweep accepts no move.
pub fn run_greedy(ev: &mut Evaluator) -> Result<GreedyResult> {
    let Period { topo, lib, requests, .. } = ev.period;
    let files = requests.requested_files();
    let bound = topo.num_bs * lib.layers.pow(2) * files.len().pow(2);
    let start_evals = ev.evaluations;
    let mut q = CachePlacement::for_scenario(topo, lib);
    let mut cur = ev.evaluate(&q)?;
    let mut steps = vec![GreedyStep { sweep: 0, bs: 0, q: q.to_string(), nu: cur.nu }];
    let mut skipped = 0;
    let mut sweep = 0;
    loop {
        sweep += 1;
        let mut moved = false;
        for m in 0..topo.num_bs {
            let mut best: Option<(CachePlacement, Evaluation)> = None;
            for c in neighborhood(&q, m, topo, lib, &files).into_iter().skip(1) {
                let e = ev.evaluate(&c)?;
                if e.failed {
                    skipped += 1;
                    continue;
                }
                let target = best.as_ref().map_or(cur.nu, |b| b.1.nu);
                if better(e.nu, target) || (cur.nu.is_infinite() && best.is_none() && e.nu.is_finite()) {
                    best = Some((c, e));
                }
            }
            if let Some((c, e)) = best {
                q = c;
                cur = e;
                moved = true;
                steps.push(GreedyStep { sweep, bs: m, q: q.to_string(), nu: cur.nu });
            }
        }
        if !moved {
            break;
        }
    }
    Ok(GreedyResult { placement: q, evaluation: cur, steps, evaluations: ev.evaluations - start_evals, bound, skipped })
}

/// Each BS is filled with subfiles drawn uniformly from the library until nothing else fits.
pub fn random_placement(topo: &NetworkTopology, lib: &VideoLibrary, seed: u64) -> CachePlacement {
    let mut rng = stream_rng(seed, 500);
    let mut q = CachePlacement::for_scenario(topo, lib);
    for m in 0..topo.num_bs {
        let mut items: Vec<(usize, usize)> = (0..lib.files)
            .flat_map(|f| (0..lib.layers).map(move |l| (f, l)))
            .filter(|&(_, l)| l > 0 || topo.is_trusted(m))
            .collect();
        items.shuffle(&mut rng);
        let mut used = 0.0;
        for (f, l) in items {
            let b = lib.subfile_bits[f][l];
            if used + b <= topo.cache_bits[m] * (1.0 + 1e-12) {
                q.set(f, l, m, true);
                used += b;
            }
        }
    }
    q
}

/// Most popular files first; base before enhancement layers at trusted BSs,
/// enhancement layers only at untrusted BSs.
pub fn preference_placement(topo: &NetworkTopology, lib: &VideoLibrary) -> CachePlacement {
    let mut order: Vec<usize> = (0..lib.files).collect();
    order.sort_by(|&a, &b| lib.popularity[b].total_cmp(&lib.popularity[a]).then(a.cmp(&b)));
    let mut q = CachePlacement::for_scenario(topo, lib);
    for m in 0..topo.num_bs {
        let mut used = 0.0;
        for &f in &order {
            for l in 0..lib.layers {
                if l == 0 && !topo.is_trusted(m) {
                    continue;
                }
                let b = lib.subfile_bits[f][l];
                if used + b <= topo.cache_bits[m] * (1.0 + 1e-12) {
                    q.set(f, l, m, true);
                    used += b;
                }
            }
        }
    }
    q
}

/// Copy of `topo` with every untrusted cache emptied.
pub fn without_untrusted_cache(topo: &NetworkTopology) -> NetworkTopology {
    let mut t = topo.clone();
    for m in t.untrusted() {
        t.cache_bits[m] = 0.0;
    }
    t
}
