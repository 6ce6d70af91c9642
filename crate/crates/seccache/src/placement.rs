//! Binary cache placement q over (file, layer, BS).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{NetworkTopology, VideoLibrary};

pub const PLACEMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CachePlacement {
    pub files: usize,
    pub layers: usize,
    pub bs: usize,
    bits: Vec<bool>,
}

impl CachePlacement {
    pub fn empty(files: usize, layers: usize, bs: usize) -> Self {
        CachePlacement { files, layers, bs, bits: vec![false; files * layers * bs] }
    }

    pub fn for_scenario(topo: &NetworkTopology, lib: &VideoLibrary) -> Self {
        Self::empty(lib.files, lib.layers, topo.num_bs)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn index(&self, f: usize, l: usize, m: usize) -> usize {
        (f * self.layers + l) * self.bs + m
    }

    /// Inverse of `index`.
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        (i / (self.layers * self.bs), (i / self.bs) % self.layers, i % self.bs)
    }

    pub fn get(&self, f: usize, l: usize, m: usize) -> bool {
        self.bits[self.index(f, l, m)]
    }

    pub fn set(&mut self, f: usize, l: usize, m: usize, v: bool) {
        let i = self.index(f, l, m);
        self.bits[i] = v;
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set_bit(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn from_bits(files: usize, layers: usize, bs: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), files * layers * bs);
        CachePlacement { files, layers, bs, bits }
    }

    /// M^Coop_{f,l}.
    pub fn coop(&self, f: usize, l: usize) -> Vec<usize> {
        (0..self.bs).filter(|&m| self.get(f, l, m)).collect()
    }

    pub fn used_bits(&self, lib: &VideoLibrary, m: usize) -> f64 {
        let mut s = 0.0;
        for f in 0..self.files {
            for l in 0..self.layers {
                if self.get(f, l, m) {
                    s += lib.subfile_bits[f][l];
                }
            }
        }
        s
    }

    /// Checks C1 (no base layer at untrusted BSs) and C2 (capacity).
    pub fn validate(&self, topo: &NetworkTopology, lib: &VideoLibrary) -> Result<()> {
        if self.files != lib.files || self.layers != lib.layers || self.bs != topo.num_bs {
            return Err(Error::Placement("dimensions do not match the scenario".into()));
        }
        for m in topo.untrusted() {
            for f in 0..self.files {
                if self.get(f, 0, m) {
                    return Err(Error::Placement(format!("C1: base layer of file {f} cached at untrusted BS {m}")));
                }
            }
        }
        for m in 0..self.bs {
            let used = self.used_bits(lib, m);
            if used > topo.cache_bits[m] * (1.0 + 1e-12) {
                return Err(Error::Placement(format!(
                    "C2: BS {m} stores {used:.0} bits over capacity {:.0}",
                    topo.cache_bits[m]
                )));
            }
        }
        Ok(())
    }

    pub fn is_feasible(&self, topo: &NetworkTopology, lib: &VideoLibrary) -> bool {
        self.validate(topo, lib).is_ok()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PlacementJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: PlacementJson = serde_json::from_str(s)?;
        p.try_into()
    }
}

impl std::fmt::Display for CachePlacement {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for m in 0..self.bs {
            if m > 0 {
                write!(out, "|")?;
            }
            for f in 0..self.files {
                for l in 0..self.layers {
                    write!(out, "{}", u8::from(self.get(f, l, m)))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PlacementJson {
    version: u32,
    files: usize,
    layers: usize,
    bs: usize,
    /// `q[f][l]` lists the BSs caching subfile (f, l).
    q: Vec<Vec<Vec<usize>>>,
}

impl From<&CachePlacement> for PlacementJson {
    fn from(p: &CachePlacement) -> Self {
        let q = (0..p.files).map(|f| (0..p.layers).map(|l| p.coop(f, l)).collect()).collect();
        PlacementJson { version: PLACEMENT_VERSION, files: p.files, layers: p.layers, bs: p.bs, q }
    }
}

impl TryFrom<PlacementJson> for CachePlacement {
    type Error = Error;

    fn try_from(j: PlacementJson) -> Result<Self> {
        if j.version != PLACEMENT_VERSION {
            return Err(Error::Placement(format!("unsupported placement version {}", j.version)));
        }
        if j.q.len() != j.files || j.q.iter().any(|r| r.len() != j.layers) {
            return Err(Error::Placement("q does not match declared dimensions".into()));
        }
        let mut p = CachePlacement::empty(j.files, j.layers, j.bs);
        for (f, row) in j.q.iter().enumerate() {
            for (l, list) in row.iter().enumerate() {
                for &m in list {
                    if m >= j.bs {
                        return Err(Error::Placement(format!("BS index {m} out of range")));
                    }
                    p.set(f, l, m, true);
                }
            }
        }
        Ok(p)
    }
}
