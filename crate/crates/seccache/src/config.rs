//! Configuration file schema. Keys follow the simulation parameter table;
//! any omitted key takes its table default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MB_BITS: f64 = 8e6;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Cell radius R1 in meters.
    pub radius_m: f64,
    /// N_0.
    pub macro_antennas: usize,
    /// N_m for every small cell.
    pub small_antennas: usize,
    /// Number of small cell BSs, M - 1 when the macro is counted.
    pub small_cells: usize,
    /// M_u. Untrusted BSs take the highest indices.
    pub untrusted: usize,
    pub macro_power_dbm: f64,
    pub small_power_dbm: f64,
    pub macro_cache_mb: f64,
    pub small_cache_mb: f64,
    /// Optional per-small-cell override of `small_cache_mb`.
    pub small_cache_mb_each: Option<Vec<f64>>,
    pub noise_density_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub macro_pathloss: PathLoss,
    pub small_pathloss: PathLoss,
    /// Distances are clamped below at this value (meters).
    pub min_distance_m: f64,
}

/// PL(dB) = intercept + slope * log10(d / km).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLoss {
    pub intercept: f64,
    pub slope: f64,
}

impl PathLoss {
    pub fn gain(&self, d_m: f64) -> f64 {
        let db = self.intercept + self.slope * (d_m / 1000.0).log10();
        10f64.powf(-db / 10.0)
    }
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            radius_m: 1000.0,
            macro_antennas: 6,
            small_antennas: 2,
            small_cells: 3,
            untrusted: 1,
            macro_power_dbm: 46.0,
            small_power_dbm: 39.0,
            macro_cache_mb: 1000.0,
            small_cache_mb: 600.0,
            small_cache_mb_each: None,
            noise_density_dbm_hz: -172.6,
            bandwidth_hz: 5e6,
            macro_pathloss: PathLoss { intercept: 128.1, slope: 37.6 },
            small_pathloss: PathLoss { intercept: 140.7, slope: 36.7 },
            min_distance_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryConfig {
    pub files: usize,
    pub layers: usize,
    pub subfile_mb: f64,
    pub zipf_gamma: f64,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig { files: 10, layers: 2, subfile_mb: 250.0, zipf_gamma: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestConfig {
    pub users: usize,
    /// R^req of the base layer (bps).
    pub rate_base_bps: f64,
    /// R^req of every enhancement layer (bps).
    pub rate_enh_bps: f64,
    /// R^tol as a fraction of the base-layer R^req.
    pub tol_ratio: f64,
    /// Layers requested per user; defaults to all layers.
    pub layers_per_request: Option<usize>,
}

impl Default for RequestConfig {
    fn default() -> Self {
        RequestConfig {
            users: 6,
            rate_base_bps: 825e3,
            rate_enh_bps: 1.5e6,
            tol_ratio: 0.1,
            layers_per_request: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorSampling {
    /// Uniform inside the ellipsoid.
    #[default]
    Uniform,
    /// Uniform on the ellipsoid boundary.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    /// sigma_rho^2 = eps_rho^2 / |h|^2.
    pub sigma_user: f64,
    /// sigma_j^2 = eps_j^2 / |G|_F^2.
    pub sigma_eve: f64,
    pub sampling: ErrorSampling,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig { sigma_user: 0.01, sigma_eve: 0.05, sampling: ErrorSampling::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// mu = mu_factor * P_max.
    pub mu_factor: f64,
    /// Relative GBD gap; the stopping tolerance is gbd_tol * (1 + |UB|).
    pub gbd_tol: f64,
    pub gbd_iter_cap: usize,
    pub rank_tol: f64,
    /// Slack tolerance as a fraction of P_max.
    pub slack_tol: f64,
    pub conic_tol: f64,
    /// Largest tolerated fraction of numerically failed solves.
    pub failure_budget: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu_factor: 100.0,
            gbd_tol: 1e-4,
            gbd_iter_cap: 200,
            rank_tol: 1e-6,
            slack_tol: 1e-6,
            conic_tol: 1e-8,
            failure_budget: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    OptimalGbd,
    Greedy,
    Random,
    Preference,
    NoUntrustedOptimal,
    NoUntrustedGreedy,
    NonRobust,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::OptimalGbd => "optimal-gbd",
            Scheme::Greedy => "greedy",
            Scheme::Random => "random",
            Scheme::Preference => "preference",
            Scheme::NoUntrustedOptimal => "no-untrusted-optimal",
            Scheme::NoUntrustedGreedy => "no-untrusted-greedy",
            Scheme::NonRobust => "non-robust",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    SmallCacheMb,
    SigmaEve,
    Untrusted,
    Users,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SmallCacheMb => "small_cache_mb",
            SweepAxis::SigmaEve => "sigma_eve",
            SweepAxis::Untrusted => "untrusted",
            SweepAxis::Users => "users",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub trials: usize,
    pub seed: u64,
    /// Slots per period, T_0.
    pub slots: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { scheme: Scheme::OptimalGbd, trials: 100, seed: 1, slots: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub schemes: Vec<Scheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub topology: TopologyConfig,
    pub library: LibraryConfig,
    pub requests: RequestConfig,
    pub uncertainty: UncertaintyConfig,
    pub solver: SolverConfig,
    pub experiment: ExperimentConfig,
    pub sweep: Option<SweepConfig>,
    pub output: OutputConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Config::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if t.macro_antennas == 0 || (t.small_cells > 0 && t.small_antennas == 0) {
            return bad("antenna counts must be positive");
        }
        if t.untrusted > t.small_cells {
            return bad("more untrusted BSs than small cells");
        }
        if !(t.radius_m > 0.0 && t.bandwidth_hz > 0.0 && t.min_distance_m > 0.0) {
            return bad("radius, bandwidth and minimum distance must be positive");
        }
        if !(t.macro_cache_mb >= 0.0 && t.small_cache_mb >= 0.0) {
            return bad("cache capacities must be nonnegative");
        }
        if let Some(v) = &t.small_cache_mb_each {
            if v.len() != t.small_cells || v.iter().any(|&c| !(c >= 0.0)) {
                return bad("small_cache_mb_each needs one nonnegative value per small cell");
            }
        }
        let l = &self.library;
        if l.files == 0 || l.layers == 0 || !(l.subfile_mb > 0.0) || !(l.zipf_gamma >= 0.0) {
            return bad("library needs files >= 1, layers >= 1, positive subfile size and gamma >= 0");
        }
        let r = &self.requests;
        if r.users == 0 {
            return bad("at least one user is required");
        }
        if let Some(lp) = r.layers_per_request {
            if lp == 0 || lp > l.layers {
                return bad("layers_per_request must lie in 1..=layers");
            }
        }
        if !(r.rate_base_bps > 0.0 && r.rate_enh_bps > 0.0 && r.tol_ratio > 0.0) {
            return bad("rates and tolerance ratio must be positive");
        }
        let u = &self.uncertainty;
        for s in [u.sigma_user, u.sigma_eve] {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::Uncertainty(s));
            }
        }
        let s = &self.solver;
        if !(s.mu_factor >= 1.0) || !(s.gbd_tol >= 0.0) || s.gbd_iter_cap == 0 {
            return bad("solver needs mu_factor >= 1, gbd_tol >= 0 and a positive iteration cap");
        }
        if !(s.conic_tol > 1e-12 && s.conic_tol < 1e-2) {
            return bad("conic_tol must lie in (1e-12, 1e-2)");
        }
        if self.experiment.trials == 0 || self.experiment.slots == 0 {
            return bad("trials and slots must be positive");
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return bad("sweep axis has no values");
            }
        }
        Ok(())
    }
}
