use seccache::config::{dbm_to_watts, watts_to_dbm, Config, Scheme, SweepAxis};
use seccache::Error;

#[test]
fn defaults_match_parameter_table() {
    let c = Config::default();
    assert_eq!(c.topology.macro_antennas, 6);
    assert_eq!(c.topology.small_antennas, 2);
    assert_eq!(c.topology.small_cells, 3);
    assert_eq!(c.library.layers, 2);
    assert_eq!(c.library.zipf_gamma, 1.1);
    assert_eq!(c.requests.rate_base_bps, 825e3);
    assert_eq!(c.uncertainty.sigma_user, 0.01);
    assert_eq!(c.uncertainty.sigma_eve, 0.05);
    assert_eq!(c.solver.mu_factor, 100.0);
    assert_eq!(c.experiment.slots, 10);
    c.validate().unwrap();
}

#[test]
fn power_conversions() {
    assert!((dbm_to_watts(46.0) - 39.810717).abs() < 1e-6);
    assert!((dbm_to_watts(39.0) - 7.943282).abs() < 1e-6);
    assert!((watts_to_dbm(1.0) - 30.0).abs() < 1e-12);
    assert!((watts_to_dbm(dbm_to_watts(-105.61)) + 105.61).abs() < 1e-9);
}

#[test]
fn parses_partial_file() {
    let c = Config::from_toml(
        r#"
[topology]
small_cache_mb = 900.0
untrusted = 2

[experiment]
scheme = "no-untrusted-greedy"
trials = 3

[sweep]
axis = "sigma-eve"
values = [0.02, 0.1]
"#,
    )
    .unwrap();
    assert_eq!(c.topology.small_cache_mb, 900.0);
    assert_eq!(c.topology.untrusted, 2);
    assert_eq!(c.topology.macro_antennas, 6);
    assert_eq!(c.experiment.scheme, Scheme::NoUntrustedGreedy);
    let sw = c.sweep.unwrap();
    assert_eq!(sw.axis, SweepAxis::SigmaEve);
    assert!(sw.schemes.is_empty());
}

#[test]
fn rejects_bad_files() {
    let bad = [
        "[topology]\nbogus = 1\n",
        "[topology]\nuntrusted = 4\n",
        "[experiment]\ntrials = 0\n",
        "[sweep]\naxis = \"untrusted\"\nvalues = []\n",
        "[library]\nfiles = 0\n",
        "[solver]\nconic_tol = 1.0\n",
        "[requests]\nlayers_per_request = 3\n",
    ];
    for text in bad {
        assert!(matches!(Config::from_toml(text), Err(Error::Config(_))), "{text}");
    }
    assert!(matches!(Config::from_toml("[uncertainty]\nsigma_eve = 1.0\n"), Err(Error::Uncertainty(_))));
}

#[test]
fn shipped_configs_load() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            Config::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
