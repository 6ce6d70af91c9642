#![allow(dead_code)]

use seccache::config::Config;
use seccache::gbd::{master_structure, Evaluator};
use seccache::placement::CachePlacement;
use seccache::scenario::Scenario;

/// One trusted small cell, two files, one slot.
pub fn tiny_config() -> Config {
    let mut c = Config::default();
    c.topology.macro_antennas = 2;
    c.topology.small_antennas = 1;
    c.topology.small_cells = 1;
    c.topology.untrusted = 0;
    c.topology.small_cache_mb = 250.0;
    c.library.files = 2;
    c.requests.users = 2;
    c.experiment.slots = 1;
    c
}

/// Network of the trend sweeps.
pub fn desk_config() -> Config {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml")).unwrap();
    Config::from_toml(&text).unwrap()
}

/// Three small cells, one of them untrusted, two users.
pub fn small_config() -> Config {
    let mut c = Config::default();
    c.topology.macro_antennas = 2;
    c.topology.small_antennas = 1;
    c.topology.small_cells = 3;
    c.topology.untrusted = 1;
    c.library.files = 4;
    c.requests.users = 2;
    c.experiment.slots = 1;
    c
}

pub fn scenario(cfg: &Config, seed: u64) -> Scenario {
    Scenario::generate(cfg, seed, cfg.experiment.slots, 0).unwrap()
}

/// Every placement allowed by C1/C2 over the requested files.
pub fn feasible_placements(sc: &Scenario) -> Vec<CachePlacement> {
    let mp = master_structure(&sc.topology, &sc.library, &sc.requests);
    let nf = mp.free.len();
    assert!(nf <= 20);
    let mut out = Vec::new();
    for mask in 0u32..(1 << nf) {
        let mut bits = vec![false; mp.n_bits];
        for (k, &i) in mp.free.iter().enumerate() {
            bits[i] = mask >> k & 1 == 1;
        }
        if mp.is_feasible(&bits) {
            out.push(CachePlacement::from_bits(sc.library.files, sc.library.layers, sc.topology.num_bs, bits));
        }
    }
    out
}

/// Exhaustive minimum of nu over the feasible placements.
pub fn brute_force(ev: &mut Evaluator, sc: &Scenario) -> (f64, CachePlacement) {
    let mut best = (f64::INFINITY, CachePlacement::for_scenario(&sc.topology, &sc.library));
    for q in feasible_placements(sc) {
        let nu = ev.evaluate(&q).unwrap().nu;
        if nu < best.0 {
            best = (nu, q);
        }
    }
    best
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
