mod common;

use common::{scenario, tiny_config};
use conic::{Complex64, ConicProblem, SolveStatus};
use seccache::builder::{
    assemble_subproblem, extract_duals, qos_lmi, qos_lmi_value, secrecy_lmi_value, sic_coefficient, sic_table,
    BuildOptions, Mode, WbarRef,
};
use seccache::placement::CachePlacement;
use seccache::scenario::{CMat, CVec, RequestSet, Scenario};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn min_eig(m: &CMat) -> f64 {
    conic::embed::hermitian_part(m).symmetric_eigen().eigenvalues.min()
}

fn e1(n: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[0] = c(1.0);
    v
}

/// Every requested (file, layer) cached at every trusted BS.
fn full_trusted(sc: &Scenario) -> CachePlacement {
    let mut q = CachePlacement::for_scenario(&sc.topology, &sc.library);
    for f in sc.requests.requested_files() {
        for l in 0..sc.library.layers {
            for m in 0..sc.topology.trusted_count {
                q.set(f, l, m, true);
            }
        }
    }
    q
}

fn roomy() -> seccache::config::Config {
    let mut cfg = tiny_config();
    cfg.topology.macro_cache_mb = 1e5;
    cfg.topology.small_cache_mb = 1e5;
    cfg
}

fn slacked(sc: &Scenario) -> BuildOptions {
    BuildOptions { mode: Mode::Slacked, mu: 100.0 * sc.topology.p_total(), robust: true }
}

#[test]
fn sic_coefficients() {
    assert!(!sic_coefficient(0, 1, 0, 0));
    assert!(sic_coefficient(0, 0, 0, 1));
    assert!(!sic_coefficient(0, 1, 0, 1));
    for (l, l2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        assert!(sic_coefficient(0, l, 1, l2));
    }
    let sc = scenario(&tiny_config(), 3);
    let t = sic_table(&sc.requests);
    assert_eq!(t.len(), 4);
    assert_eq!(t.streams, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    assert!(!t.a(1, 0));
    assert!(t.a(0, 1));
    assert!(t.a(2, 1));
}

#[test]
fn s_procedure_hand_example() {
    // Corner entry is h^H T h - sigma^2 - delta eps^2.
    let t = CMat::identity(2, 2);
    let xi = CMat::identity(2, 2);
    let m = qos_lmi_value(&t, &e1(2), &xi, 0.4, 0.5, 1.0);
    assert!((m[(2, 2)].re - 0.34).abs() < 1e-12);
    assert!(min_eig(&m.view((0, 0), (2, 2)).into_owned()) > 0.0);
    // The worst point in the ball has |h|^2 = 0.36 < 0.5, so no delta certifies it.
    for k in 0..200 {
        let d = k as f64 * 0.05;
        assert!(min_eig(&qos_lmi_value(&t, &e1(2), &xi, 0.4, 0.5, d)) < 0.0, "delta {d}");
    }
    // With sigma^2 = 0.3 < 0.36 delta = 1 works.
    assert!(min_eig(&qos_lmi_value(&t, &e1(2), &xi, 0.4, 0.3, 1.0)) >= 0.0);
}

#[test]
fn zero_radius_gives_nominal_constraint() {
    let mut p = ConicProblem::new();
    let b = qos_lmi(&mut p, "C6 r0 l0", &e1(3), &CMat::identity(3, 3), 0.0, 1.0, &[]).unwrap();
    assert!(b.nominal);
    assert_eq!(b.dim, 1);
    assert!(b.delta.is_none());
    assert!(qos_lmi(&mut p, "bad", &e1(3), &CMat::identity(3, 3), -1.0, 1.0, &[]).is_err());

    let mut cfg = tiny_config();
    cfg.uncertainty.sigma_user = 0.0;
    cfg.uncertainty.sigma_eve = 0.0;
    cfg.topology.small_cache_mb = 1e5;
    let sc = scenario(&cfg, 1);
    let q = full_trusted(&sc);
    let sp = assemble_subproblem(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &slacked(&sc)).unwrap();
    assert!(sp.qos.iter().all(|b| b.nominal && b.dim == 1));
}

#[test]
fn secrecy_lmi_holds_without_signal() {
    let n = 3;
    let g = CMat::from_fn(n, 1, |i, _| c(0.3 + i as f64));
    let v = CMat::identity(n, n) * c(0.2);
    let m = secrecy_lmi_value(&(-v), &g, &CMat::identity(n, n), 0.3, 1.0, 0.0);
    assert!(min_eig(&m) >= -1e-12);
}

#[test]
fn empty_request_set_costs_nothing() {
    let sc = scenario(&tiny_config(), 2);
    let none = RequestSet { requests: vec![], user_positions: vec![] };
    let mut slot = sc.slots[0].clone();
    slot.h.clear();
    slot.h_hat.clear();
    slot.eps_user.clear();
    slot.xi_user.clear();
    let q = CachePlacement::for_scenario(&sc.topology, &sc.library);
    for mode in [Mode::Slacked, Mode::Eliminated] {
        let bo = BuildOptions { mode, mu: 100.0 * sc.topology.p_total(), robust: true };
        let sp = assemble_subproblem(&sc.topology, &sc.library, &none, &slot, &q, &bo).unwrap();
        let sol = conic::solve(&sp.problem, 1e-8).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sp.total_power(&sol) < 1e-6);
        assert!(sp.v_value(&sol).norm() < 1e-6);
    }
}

#[test]
fn eliminated_mode_drops_uncached_antennas() {
    let sc = scenario(&tiny_config(), 4);
    let mut q = CachePlacement::for_scenario(&sc.topology, &sc.library);
    for f in sc.requests.requested_files() {
        q.set(f, 0, 0, true);
        q.set(f, 1, 0, true);
    }
    let bo = BuildOptions { mode: Mode::Eliminated, mu: 1.0, robust: true };
    let sp = assemble_subproblem(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &bo).unwrap();
    let small = sc.topology.antenna_range(1);
    for w in &sp.w {
        assert_eq!(w.dim(), sc.topology.antennas[0]);
        for i in small.clone() {
            assert!(w.sel.row(i).iter().all(|z| z.norm() == 0.0));
        }
    }
    assert!(sp.c3.is_empty());
}

#[test]
fn slacked_and_eliminated_agree() {
    let cfg = roomy();
    let mut checked = 0;
    for seed in 0..6 {
        let sc = scenario(&cfg, seed);
        let q = full_trusted(&sc);
        let slot = &sc.slots[0];
        let sp = assemble_subproblem(&sc.topology, &sc.library, &sc.requests, slot, &q, &slacked(&sc)).unwrap();
        let a = conic::solve(&sp.problem, 1e-8).unwrap();
        let bo = BuildOptions { mode: Mode::Eliminated, mu: 1.0, robust: true };
        let se = assemble_subproblem(&sc.topology, &sc.library, &sc.requests, slot, &q, &bo).unwrap();
        let b = conic::solve(&se.problem, 1e-8).unwrap();
        assert_eq!(a.status == SolveStatus::Optimal, b.status == SolveStatus::Optimal, "seed {seed}");
        if b.status != SolveStatus::Optimal {
            continue;
        }
        checked += 1;
        let (pa, pb) = (sp.total_power(&a), se.total_power(&b));
        assert!(common::rel(pa, pb) < 1e-5, "seed {seed}: {pa} vs {pb}");
        let slack = sp.slacks(&a).into_iter().fold(0.0, f64::max);
        assert!(slack <= 1e-6 * sc.topology.p_total(), "seed {seed}: slack {slack}");
    }
    assert!(checked >= 3);
}

#[test]
fn duals_are_nonnegative() {
    let cfg = tiny_config();
    let mut solved = 0;
    for seed in 0..100 {
        let sc = scenario(&cfg, 100 + seed);
        let mut q = CachePlacement::for_scenario(&sc.topology, &sc.library);
        // Vary the placement so C3 rows with both right-hand sides appear.
        let f = sc.requests.requests[0].file;
        q.set(f, (seed % 2) as usize, 1, true);
        let sp = assemble_subproblem(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &slacked(&sc)).unwrap();
        let sol = conic::solve(&sp.problem, 1e-8).unwrap();
        if sol.status != SolveStatus::Optimal {
            continue;
        }
        solved += 1;
        let d = extract_duals(&sp, &sol).unwrap();
        assert_eq!(d.c3.len(), sp.c3.len());
        for b in &sp.c3 {
            assert!(sol.dual(b.constraint).scalar() >= -1e-10, "seed {seed}");
        }
    }
    assert!(solved >= 90, "only {solved} solved");
}

#[test]
fn big_m_rows_are_implied_by_power_caps_when_all_cached() {
    let cfg = roomy();
    for seed in 0..4 {
        let sc = scenario(&cfg, 20 + seed);
        let q = full_trusted(&sc);
        let sp = assemble_subproblem(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &slacked(&sc)).unwrap();
        let sol = conic::solve(&sp.problem, 1e-8).unwrap();
        if sol.status != SolveStatus::Optimal {
            continue;
        }
        let w = sp.w_values(&sol);
        for b in &sp.c3 {
            let used: f64 = sc.topology.antenna_range(b.bs).map(|i| w[b.stream][(i, i)].re).sum();
            assert!(used <= b.power * (1.0 + 1e-7));
        }
        // Rows sit far below their caps, so their multipliers vanish.
        let d = extract_duals(&sp, &sol).unwrap();
        let scale = sp.mu;
        assert!(d.c3.iter().all(|&l| l < 1e-6 * scale), "seed {seed}: {:?}", d.c3);
        assert!(sp.penalty(&sol) <= 1e-6 * sc.topology.p_total());
    }
}

#[test]
fn eliminated_mode_has_no_duals() {
    let sc = scenario(&roomy(), 5);
    let q = full_trusted(&sc);
    let bo = BuildOptions { mode: Mode::Eliminated, mu: 1.0, robust: true };
    let sp = assemble_subproblem(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &bo).unwrap();
    let sol = conic::solve(&sp.problem, 1e-8).unwrap();
    assert!(extract_duals(&sp, &sol).is_err());
}

#[test]
fn cached_subfiles_give_no_masking_interference() {
    let mut cfg = common::small_config();
    cfg.topology.small_cache_mb = 1e5;
    let sc = scenario(&cfg, 7);
    let j = sc.topology.untrusted().next().unwrap();
    let mut q = full_trusted(&sc);
    for f in sc.requests.requested_files() {
        q.set(f, 1, j, true);
    }
    let bo = BuildOptions { mode: Mode::Eliminated, mu: 1.0, robust: true };
    let sp = assemble_subproblem(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &bo).unwrap();
    for (s, &(_, l)) in sp.sic.streams.iter().enumerate() {
        if l == 1 {
            assert!(sp.wbar[s].iter().all(|w| matches!(w, WbarRef::Zero)), "stream {s}");
        }
    }
    let base_other = sp.sic.streams.iter().position(|&(r, l)| r == 1 && l == 0).unwrap();
    assert!(matches!(sp.wbar[base_other][0], WbarRef::SameAsW));
}

#[test]
fn rejects_small_penalty_and_bad_placement() {
    let sc = scenario(&tiny_config(), 6);
    let q = CachePlacement::for_scenario(&sc.topology, &sc.library);
    let bo = BuildOptions { mode: Mode::Slacked, mu: 0.5, robust: true };
    assert!(assemble_subproblem(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &q, &bo).is_err());
    let wrong = CachePlacement::empty(1, 1, 1);
    assert!(assemble_subproblem(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &wrong, &slacked(&sc)).is_err());
}
