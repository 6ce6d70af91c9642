//! Topologies, video libraries, requests and per-slot channel realizations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{dbm_to_watts, ErrorSampling, LibraryConfig, RequestConfig, TopologyConfig, UncertaintyConfig, MB_BITS};
use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub const SCENARIO_VERSION: u32 = 1;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    /// Number of BSs including the macro (index 0).
    pub num_bs: usize,
    /// Trusted BSs are `0..trusted_count`, the rest are untrusted.
    pub trusted_count: usize,
    pub antennas: Vec<usize>,
    pub positions: Vec<[f64; 2]>,
    pub max_power: Vec<f64>,
    pub cache_bits: Vec<f64>,
    pub noise_user: f64,
    pub noise_eve: f64,
    pub bandwidth: f64,
    pub radius: f64,
    pub min_distance: f64,
}

impl NetworkTopology {
    pub fn total_antennas(&self) -> usize {
        self.antennas.iter().sum()
    }

    /// First global antenna index of BS `m`.
    pub fn offset(&self, m: usize) -> usize {
        self.antennas[..m].iter().sum()
    }

    pub fn antenna_range(&self, m: usize) -> std::ops::Range<usize> {
        let o = self.offset(m);
        o..o + self.antennas[m]
    }

    /// Diagonal of Lambda_m.
    pub fn selector(&self, m: usize) -> DVector<f64> {
        let r = self.antenna_range(m);
        DVector::from_fn(self.total_antennas(), |i, _| if r.contains(&i) { 1.0 } else { 0.0 })
    }

    /// Diagonal of Lambda_U.
    pub fn untrusted_selector(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.total_antennas());
        for m in self.untrusted() {
            d += self.selector(m);
        }
        d
    }

    pub fn untrusted(&self) -> std::ops::Range<usize> {
        self.trusted_count..self.num_bs
    }

    pub fn is_trusted(&self, m: usize) -> bool {
        m < self.trusted_count
    }

    pub fn trusted_antennas(&self) -> usize {
        self.antennas[..self.trusted_count].iter().sum()
    }

    /// P_max, the sum of per-BS power limits.
    pub fn p_total(&self) -> f64 {
        self.max_power.iter().sum()
    }
}

pub fn build_topology(cfg: &TopologyConfig, seed: u64) -> Result<NetworkTopology> {
    if cfg.macro_antennas == 0 || (cfg.small_cells > 0 && cfg.small_antennas == 0) {
        return Err(Error::Config("antenna counts must be positive".into()));
    }
    if cfg.untrusted > cfg.small_cells {
        return Err(Error::Config("more untrusted BSs than small cells".into()));
    }
    let num_bs = cfg.small_cells + 1;
    let mut rng = stream_rng(seed, 1);
    let mut positions = vec![[0.0, 0.0]];
    for _ in 0..cfg.small_cells {
        positions.push(uniform_disc(&mut rng, cfg.radius_m));
    }
    let mut antennas = vec![cfg.macro_antennas];
    let mut max_power = vec![dbm_to_watts(cfg.macro_power_dbm)];
    let mut cache_bits = vec![cfg.macro_cache_mb * MB_BITS];
    for m in 0..cfg.small_cells {
        antennas.push(cfg.small_antennas);
        max_power.push(dbm_to_watts(cfg.small_power_dbm));
        let mb = cfg.small_cache_mb_each.as_ref().map_or(cfg.small_cache_mb, |v| v[m]);
        cache_bits.push(mb * MB_BITS);
    }
    let noise = dbm_to_watts(cfg.noise_density_dbm_hz) * cfg.bandwidth_hz;
    Ok(NetworkTopology {
        num_bs,
        trusted_count: num_bs - cfg.untrusted,
        antennas,
        positions,
        max_power,
        cache_bits,
        noise_user: noise,
        noise_eve: noise,
        bandwidth: cfg.bandwidth_hz,
        radius: cfg.radius_m,
        min_distance: cfg.min_distance_m,
    })
}

fn uniform_disc(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let a = std::f64::consts::TAU * rng.random::<f64>();
    [r * a.cos(), r * a.sin()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoLibrary {
    pub files: usize,
    pub layers: usize,
    /// V_{f,l} in bits, indexed `[f][l]`.
    pub subfile_bits: Vec<Vec<f64>>,
    pub popularity: Vec<f64>,
    pub zipf_gamma: f64,
}

impl VideoLibrary {
    pub fn new(cfg: &LibraryConfig) -> VideoLibrary {
        VideoLibrary {
            files: cfg.files,
            layers: cfg.layers,
            subfile_bits: vec![vec![cfg.subfile_mb * MB_BITS; cfg.layers]; cfg.files],
            popularity: zipf_popularity(cfg.zipf_gamma, cfg.files),
            zipf_gamma: cfg.zipf_gamma,
        }
    }
}

/// theta_f proportional to f^-gamma for ranks f = 1..F.
pub fn zipf_popularity(gamma: f64, files: usize) -> Vec<f64> {
    let w: Vec<f64> = (1..=files).map(|f| (f as f64).powf(-gamma)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub user: usize,
    pub file: usize,
    /// L_rho.
    pub layers: usize,
    /// R^req per requested layer (b/s/Hz).
    pub rate_req: Vec<f64>,
    /// R^tol of the base layer (b/s/Hz).
    pub rate_tol: f64,
}

impl Request {
    pub fn eta_req(&self, l: usize) -> f64 {
        self.rate_req[l].exp2() - 1.0
    }

    pub fn eta_tol(&self) -> f64 {
        self.rate_tol.exp2() - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSet {
    pub requests: Vec<Request>,
    /// Position of each user.
    pub user_positions: Vec<[f64; 2]>,
}

impl RequestSet {
    /// Every (request, layer) pair in a fixed order.
    pub fn streams(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for (r, q) in self.requests.iter().enumerate() {
            for l in 0..q.layers {
                v.push((r, l));
            }
        }
        v
    }

    /// Files requested at least once, ascending.
    pub fn requested_files(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.requests.iter().map(|r| r.file).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

pub fn sample_requests(
    topo: &NetworkTopology,
    lib: &VideoLibrary,
    cfg: &RequestConfig,
    seed: u64,
) -> Result<RequestSet> {
    if cfg.users == 0 {
        return Err(Error::Config("at least one user is required".into()));
    }
    let layers = cfg.layers_per_request.unwrap_or(lib.layers).min(lib.layers);
    let mut rng = stream_rng(seed, 2);
    let mut requests = Vec::with_capacity(cfg.users);
    let mut user_positions = Vec::with_capacity(cfg.users);
    for k in 0..cfg.users {
        user_positions.push(uniform_disc(&mut rng, topo.radius));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut file = lib.files - 1;
        for (f, p) in lib.popularity.iter().enumerate() {
            acc += p;
            if u < acc {
                file = f;
                break;
            }
        }
        let base = cfg.rate_base_bps / topo.bandwidth;
        let enh = cfg.rate_enh_bps / topo.bandwidth;
        let rate_req = (0..layers).map(|l| if l == 0 { base } else { enh }).collect();
        requests.push(Request { user: k, file, layers, rate_req, rate_tol: cfg.tol_ratio * base });
    }
    Ok(RequestSet { requests, user_positions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSlot {
    pub t: usize,
    /// True channel h per request.
    pub h: Vec<CVec>,
    pub h_hat: Vec<CVec>,
    /// True G_j for each untrusted BS, in index order.
    pub g: Vec<CMat>,
    pub g_hat: Vec<CMat>,
    pub eps_user: Vec<f64>,
    pub eps_eve: Vec<f64>,
    pub xi_user: Vec<CMat>,
    pub xi_eve: Vec<CMat>,
}

fn cn(rng: &mut ChaCha8Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Complex vector uniform in the unit ball (or on the sphere) of C^n.
fn unit_ball(rng: &mut ChaCha8Rng, n: usize, sampling: ErrorSampling) -> CVec {
    if n == 0 {
        return CVec::zeros(0);
    }
    let mut z = CVec::from_fn(n, |_, _| cn(rng, 1.0));
    let norm = z.norm();
    let r = match sampling {
        ErrorSampling::Uniform => rng.random::<f64>().powf(1.0 / (2 * n) as f64),
        ErrorSampling::Boundary => 1.0,
    };
    z *= Complex64::new(r / norm, 0.0);
    z
}

/// Error `d` restricted to `rows` with `dᴴ Xi d <= eps^2`, all other rows zero.
fn ellipsoid_error(
    rng: &mut ChaCha8Rng,
    xi: &CMat,
    eps: f64,
    rows: &[usize],
    cols: usize,
    sampling: ErrorSampling,
) -> CMat {
    let n = xi.nrows();
    let k = rows.len();
    let mut out = CMat::zeros(n, cols);
    if eps == 0.0 || k == 0 {
        return out;
    }
    let sub = CMat::from_fn(k, k, |i, j| xi[(rows[i], rows[j])]);
    let l = sub.cholesky().expect("orientation matrix must be positive definite").l();
    let z = unit_ball(rng, k * cols, sampling);
    for c in 0..cols {
        let zc = z.rows(c * k, k).into_owned() * Complex64::new(eps, 0.0);
        // Xi_sub = L Lᴴ; d = L^-H z gives dᴴ Xi_sub d = |z|^2.
        let d = l.adjoint().solve_upper_triangular(&zc).expect("triangular solve");
        for (i, &r) in rows.iter().enumerate() {
            out[(r, c)] = d[i];
        }
    }
    out
}

pub fn sample_channel_slot(
    topo: &NetworkTopology,
    requests: &RequestSet,
    unc: &UncertaintyConfig,
    pathloss: (&crate::config::PathLoss, &crate::config::PathLoss),
    t: usize,
    seed: u64,
) -> Result<ChannelSlot> {
    for s in [unc.sigma_user, unc.sigma_eve] {
        if !(0.0..1.0).contains(&s) {
            return Err(Error::Uncertainty(s));
        }
    }
    let n = topo.total_antennas();
    let mut rng = stream_rng(seed, 1000 + t as u64);
    let gain = |m: usize, p: [f64; 2]| -> f64 {
        let d = distance(topo.positions[m], p).max(topo.min_distance);
        if m == 0 { pathloss.0.gain(d) } else { pathloss.1.gain(d) }
    };
    let all_rows: Vec<usize> = (0..n).collect();
    let mut out = ChannelSlot {
        t,
        h: vec![],
        h_hat: vec![],
        g: vec![],
        g_hat: vec![],
        eps_user: vec![],
        eps_eve: vec![],
        xi_user: vec![],
        xi_eve: vec![],
    };
    for req in &requests.requests {
        let pos = requests.user_positions[req.user];
        let mut h = CVec::zeros(n);
        for m in 0..topo.num_bs {
            let g = gain(m, pos);
            for i in topo.antenna_range(m) {
                h[i] = cn(&mut rng, g);
            }
        }
        let xi = CMat::identity(n, n);
        let eps = unc.sigma_user.sqrt() * h.norm();
        let d = ellipsoid_error(&mut rng, &xi, eps, &all_rows, 1, unc.sampling);
        out.h_hat.push(&h - d.column(0));
        out.h.push(h);
        out.eps_user.push(eps);
        out.xi_user.push(xi);
    }
    for j in topo.untrusted() {
        let nj = topo.antennas[j];
        let mut g = CMat::zeros(n, nj);
        for m in 0..topo.num_bs {
            if m == j {
                continue;
            }
            let pg = gain(m, topo.positions[j]);
            for i in topo.antenna_range(m) {
                for c in 0..nj {
                    g[(i, c)] = cn(&mut rng, pg);
                }
            }
        }
        let rows: Vec<usize> = (0..n).filter(|i| !topo.antenna_range(j).contains(i)).collect();
        let xi = CMat::identity(n, n);
        let eps = unc.sigma_eve.sqrt() * g.norm();
        let d = ellipsoid_error(&mut rng, &xi, eps, &rows, nj, unc.sampling);
        out.g_hat.push(&g - d);
        out.g.push(g);
        out.eps_eve.push(eps);
        out.xi_eve.push(xi);
    }
    Ok(out)
}

/// Draws an error inside the uncertainty region of request `r` (or eavesdropper `j`).
pub fn sample_user_error(slot: &ChannelSlot, r: usize, rng: &mut ChaCha8Rng, sampling: ErrorSampling) -> CVec {
    let n = slot.h_hat[r].len();
    let rows: Vec<usize> = (0..n).collect();
    ellipsoid_error(rng, &slot.xi_user[r], slot.eps_user[r], &rows, 1, sampling).column(0).into_owned()
}

pub fn sample_eve_error(
    topo: &NetworkTopology,
    slot: &ChannelSlot,
    j: usize,
    rng: &mut ChaCha8Rng,
    sampling: ErrorSampling,
) -> CMat {
    let bs = topo.trusted_count + j;
    let n = topo.total_antennas();
    let rows: Vec<usize> = (0..n).filter(|i| !topo.antenna_range(bs).contains(i)).collect();
    ellipsoid_error(rng, &slot.xi_eve[j], slot.eps_eve[j], &rows, topo.antennas[bs], sampling)
}

/// One delivery period: topology, library, requests and T_0 slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub seed: u64,
    pub topology: NetworkTopology,
    pub library: VideoLibrary,
    pub requests: RequestSet,
    pub slots: Vec<ChannelSlot>,
}

impl Scenario {
    pub fn generate(cfg: &crate::config::Config, seed: u64, slots: usize, first_slot: usize) -> Result<Scenario> {
        let topology = build_topology(&cfg.topology, seed)?;
        let library = VideoLibrary::new(&cfg.library);
        let requests = sample_requests(&topology, &library, &cfg.requests, seed)?;
        let pl = (&cfg.topology.macro_pathloss, &cfg.topology.small_pathloss);
        let slots = (first_slot..first_slot + slots)
            .map(|t| sample_channel_slot(&topology, &requests, &cfg.uncertainty, pl, t, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario { version: SCENARIO_VERSION, seed, topology, library, requests, slots })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Scenario> {
        let sc: Scenario = serde_json::from_str(s)?;
        if sc.version != SCENARIO_VERSION {
            return Err(Error::Config(format!("unsupported scenario version {}", sc.version)));
        }
        Ok(sc)
    }
}
