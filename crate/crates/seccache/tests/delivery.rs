mod common;

use common::{scenario, small_config, tiny_config};
use conic::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seccache::builder::sic_table;
use seccache::config::ErrorSampling;
use seccache::delivery::{
    evaluate_rates, extract_beamformer, eve_leakage, eve_rate_det, secrecy_rate, soundness_check, solve_delivery,
    user_sinr, DeliveryOptions, DeliveryStatus, OutageReason,
};
use seccache::placement::CachePlacement;
use seccache::scenario::{CMat, CVec, Scenario};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn cvec(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn cmat(rng: &mut ChaCha8Rng, r: usize, k: usize) -> CMat {
    CMat::from_fn(r, k, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn psd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let a = cmat(rng, n, n);
    &a * a.adjoint()
}

fn opts() -> DeliveryOptions {
    DeliveryOptions::from_solver(&Default::default(), true)
}

/// Requested files cached everywhere C1 and capacity allow.
fn generous(sc: &Scenario) -> CachePlacement {
    let mut q = CachePlacement::for_scenario(&sc.topology, &sc.library);
    for f in sc.requests.requested_files() {
        for l in 0..sc.library.layers {
            for m in 0..sc.topology.num_bs {
                if l > 0 || sc.topology.is_trusted(m) {
                    q.set(f, l, m, true);
                }
            }
        }
    }
    q
}

fn roomy_small() -> seccache::config::Config {
    let mut cfg = small_config();
    cfg.topology.macro_cache_mb = 1e5;
    cfg.topology.small_cache_mb = 1e5;
    cfg
}

#[test]
fn point_to_point_shannon_rate() {
    let mut cfg = tiny_config();
    cfg.requests.users = 1;
    cfg.requests.layers_per_request = Some(1);
    let sc = scenario(&cfg, 1);
    let sic = sic_table(&sc.requests);
    assert_eq!(sic.len(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = sc.topology.total_antennas();
    let h = cvec(&mut rng, n) * c(1e-6);
    let w = cvec(&mut rng, n);
    let v = CMat::zeros(n, n);
    let q = CachePlacement::for_scenario(&sc.topology, &sc.library);
    let rep = evaluate_rates(&sc.topology, &sc.requests, &[h.clone()], &[], &[w.clone()], &v, &q, &sic);
    let want = (1.0 + h.dotc(&w).norm_sqr() / sc.topology.noise_user).log2();
    assert!((rep.user[0] - want).abs() < 1e-12);
    assert_eq!(rep.base_streams, vec![0]);
    assert!(rep.eve[0].is_empty());
}

#[test]
fn secrecy_clipping() {
    assert_eq!(secrecy_rate(2.0, 0.5), 1.5);
    assert_eq!(secrecy_rate(0.3, 0.5), 0.0);
}

#[test]
fn determinant_and_scalar_eve_rates_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let n = rng.random_range(2..6);
        let nj = rng.random_range(1..4);
        let g = cmat(&mut rng, n, nj);
        let w = cvec(&mut rng, n);
        let v = psd(&mut rng, n);
        let inter: Vec<CVec> = (0..rng.random_range(0..3)).map(|_| cvec(&mut rng, n)).collect();
        let noise = rng.random_range(0.1..2.0);
        let mut psi = CMat::zeros(nj, nj);
        for x in &inter {
            let y = g.adjoint() * x;
            psi += &y * y.adjoint();
        }
        let det = eve_rate_det(&g, &(&w * w.adjoint()), &v, &psi, noise);
        let scalar = (1.0 + eve_leakage(&g, &w, &v, &inter, noise)).log2();
        assert!((det - scalar).abs() < 1e-10, "{det} vs {scalar}");
    }
}

#[test]
fn artificial_noise_never_helps_receivers() {
    let sc = scenario(&small_config(), 3);
    let sic = sic_table(&sc.requests);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = sc.topology.total_antennas();
    for _ in 0..50 {
        let w: Vec<CVec> = (0..sic.len()).map(|_| cvec(&mut rng, n)).collect();
        let v = psd(&mut rng, n) * c(0.1);
        let bigger = &v + psd(&mut rng, n) * c(0.1);
        let g = cmat(&mut rng, n, 1);
        let h = cvec(&mut rng, n);
        for s in 0..sic.len() {
            assert!(user_sinr(&sic, s, &h, &w, &bigger, 1.0) <= user_sinr(&sic, s, &h, &w, &v, 1.0) + 1e-12);
        }
        assert!(eve_leakage(&g, &w[0], &bigger, &w[1..], 1.0) <= eve_leakage(&g, &w[0], &v, &w[1..], 1.0) + 1e-12);
    }
}

#[test]
fn cached_side_information_only_raises_leakage() {
    let sc = scenario(&small_config(), 5);
    let sic = sic_table(&sc.requests);
    let n = sc.topology.total_antennas();
    let j = sc.topology.untrusted().next().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h: Vec<CVec> = sc.slots[0].h.clone();
    let g: Vec<CMat> = sc.slots[0].g.clone();
    for _ in 0..20 {
        let w: Vec<CVec> = (0..sic.len()).map(|_| cvec(&mut rng, n) * c(1e-3)).collect();
        let v = psd(&mut rng, n) * c(1e-7);
        let mut q = CachePlacement::for_scenario(&sc.topology, &sc.library);
        let before = evaluate_rates(&sc.topology, &sc.requests, &h, &g, &w, &v, &q, &sic);
        for f in sc.requests.requested_files() {
            q.set(f, 1, j, true);
            let after = evaluate_rates(&sc.topology, &sc.requests, &h, &g, &w, &v, &q, &sic);
            for (a, b) in after.eve.iter().flatten().zip(before.eve.iter().flatten()) {
                assert!(a + 1e-12 >= *b);
            }
        }
    }
}

#[test]
fn beamformer_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..6 {
        let w = cvec(&mut rng, n);
        let big = &w * w.adjoint();
        let (u, ratio) = extract_beamformer(&big);
        assert!(ratio < 1e-12);
        assert!((&u * u.adjoint() - &big).norm() <= 1e-10 * big.norm().max(1.0));
    }
    let (_, ratio) = extract_beamformer(&CMat::identity(2, 2));
    assert!((ratio - 1.0).abs() < 1e-12);
    let (u, ratio) = extract_beamformer(&CMat::zeros(3, 3));
    assert_eq!(u.norm(), 0.0);
    assert_eq!(ratio, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn recovered_beamformer_keeps_principal_energy(seed in 0u64..10_000, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = psd(&mut rng, n);
        let (u, ratio) = extract_beamformer(&a);
        prop_assert!((0.0..=1.0).contains(&ratio));
        let top = conic::embed::hermitian_part(&a).symmetric_eigen().eigenvalues.max();
        prop_assert!((u.norm_squared() - top).abs() <= 1e-9 * top.max(1.0));
    }
}

#[test]
fn macro_only_support() {
    let mut cfg = tiny_config();
    cfg.requests.users = 1;
    let sc = scenario(&cfg, 2);
    let mut q = CachePlacement::for_scenario(&sc.topology, &sc.library);
    let f = sc.requests.requests[0].file;
    q.set(f, 0, 0, true);
    q.set(f, 1, 0, true);
    let out = solve_delivery(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &opts()).unwrap();
    assert!(out.status.is_served(), "{:?}", out.status);
    for w in &out.beamformers {
        for i in sc.topology.antenna_range(1) {
            assert_eq!(w[i].norm(), 0.0);
        }
    }
}

#[test]
fn uncached_stream_is_an_outage() {
    let sc = scenario(&tiny_config(), 2);
    let q = CachePlacement::for_scenario(&sc.topology, &sc.library);
    let out = solve_delivery(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &opts()).unwrap();
    assert_eq!(out.status, DeliveryStatus::Outage { reason: OutageReason::Infeasible { tag: "C6 r0 l0".into() } });
}

#[test]
fn unreachable_rate_is_a_c6_outage() {
    let mut cfg = tiny_config();
    cfg.requests.users = 1;
    cfg.requests.layers_per_request = Some(1);
    cfg.topology.macro_cache_mb = 1e5;
    cfg.topology.small_cache_mb = 1e5;
    let sc0 = scenario(&cfg, 4);
    // Capacity bound of full cooperation at full power, ignoring the per-BS split.
    let h = &sc0.slots[0].h_hat[0];
    let bound = (1.0 + sc0.topology.p_total() * h.norm_squared() / sc0.topology.noise_user).log2();
    let mut sc = sc0.clone();
    sc.requests.requests[0].rate_req[0] = 1.5 * bound;
    sc.requests.requests[0].rate_tol = 0.1;
    let q = generous(&sc);
    let out = solve_delivery(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &opts()).unwrap();
    match &out.status {
        DeliveryStatus::Outage { reason } => assert_eq!(reason.family(), "C6", "{reason:?}"),
        s => panic!("expected outage, got {s:?}"),
    }
    let served = solve_delivery(&sc0.topology, &sc0.library, &sc0.requests, &sc0.slots[0], &q, &opts()).unwrap();
    assert!(served.status.is_served(), "{:?}", served.status);
}

#[test]
fn served_slots_meet_power_and_secrecy_margins() {
    let cfg = roomy_small();
    let mut served = 0;
    for seed in 0..6 {
        let sc = scenario(&cfg, seed);
        let q = generous(&sc);
        let out = solve_delivery(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &opts()).unwrap();
        if !out.status.is_served() {
            continue;
        }
        served += 1;
        for m in 0..sc.topology.num_bs {
            let mut used = 0.0;
            for i in sc.topology.antenna_range(m) {
                used += out.v[(i, i)].re + out.w.iter().map(|w| w[(i, i)].re).sum::<f64>();
            }
            assert!(used <= sc.topology.max_power[m] * (1.0 + 1e-7) + 1e-7, "bs {m}: {used}");
        }
        let est = out.estimated.as_ref().unwrap();
        for (b, &s0) in est.base_streams.iter().enumerate() {
            let req = &sc.requests.requests[out.sic.streams[s0].0];
            assert!(est.secrecy[b] >= req.rate_req[0] - req.rate_tol - 1e-6, "seed {seed}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = soundness_check(&sc.topology, &sc.requests, &sc.slots[0], &q, &out, 1000, 1e-6, &mut rng, ErrorSampling::Boundary);
        assert_eq!((rep.c6_violations, rep.c7_violations), (0, 0), "seed {seed}: {rep:?}");
        let line = serde_json::to_string(&out.record(0)).unwrap();
        assert!(line.contains("\"status\":\"served\""));
    }
    assert!(served >= 3, "only {served} served");
}
