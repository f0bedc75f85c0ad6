//! On-disk cache for strategic rival surfaces. Each entry is a CSV lattice
//! of the rival's expected utility plus a metadata sidecar; an entry is
//! valid only if the sidecar matches the requesting scenario hash, grid,
//! draw count, and seed exactly.

use crate::output::write_atomic;
use launchopt::Result;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Identity of one cached surface. Any field mismatch is a cache miss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceMeta {
    pub scenario_hash: String,
    pub competitor: usize,
    pub dims: (usize, usize),
    pub m_per_point: usize,
    pub seed: u64,
}

pub struct SurfaceCache {
    dir: PathBuf,
}

impl SurfaceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SurfaceCache { dir: dir.into() }
    }

    fn stem(&self, meta: &SurfaceMeta) -> String {
        // the short hash prefix keys the file name; the sidecar check is
        // what actually decides validity
        format!("strategic_{}_{}", &meta.scenario_hash[..16.min(meta.scenario_hash.len())], meta.competitor)
    }

    pub fn csv_path(&self, meta: &SurfaceMeta) -> PathBuf {
        self.dir.join(self.stem(meta) + ".csv")
    }

    pub fn meta_path(&self, meta: &SurfaceMeta) -> PathBuf {
        self.dir.join(self.stem(meta) + ".meta.json")
    }

    /// Returns the cached surface (row-major, release times outer) when the
    /// sidecar matches `meta` exactly; any mismatch or parse failure is a
    /// miss.
    pub fn load(&self, meta: &SurfaceMeta) -> Option<Vec<f64>> {
        let sidecar = std::fs::read_to_string(self.meta_path(meta)).ok()?;
        let found: SurfaceMeta = serde_json::from_str(&sidecar).ok()?;
        if found != *meta {
            return None;
        }
        let text = std::fs::read_to_string(self.csv_path(meta)).ok()?;
        let mut values = Vec::with_capacity(meta.dims.0 * meta.dims.1);
        for line in text.lines().skip(1) {
            let v: f64 = line.split(',').nth(2)?.parse().ok()?;
            values.push(v);
        }
        (values.len() == meta.dims.0 * meta.dims.1).then_some(values)
    }

    /// Writes the surface CSV (t, p, expected_utility at cell centers) and
    /// its sidecar.
    pub fn store(
        &self,
        meta: &SurfaceMeta,
        bounds: (f64, f64, f64, f64),
        surface: &[f64],
    ) -> Result<()> {
        let (nt, np) = meta.dims;
        assert_eq!(surface.len(), nt * np, "surface shape mismatch");
        let (dt, dp) = ((bounds.1 - bounds.0) / nt as f64, (bounds.3 - bounds.2) / np as f64);
        let mut csv = String::from("t,p,expected_utility\n");
        for it in 0..nt {
            for ip in 0..np {
                let t = bounds.0 + (it as f64 + 0.5) * dt;
                let p = bounds.2 + (ip as f64 + 0.5) * dp;
                csv.push_str(&format!("{t},{p},{}\n", surface[it * np + ip]));
            }
        }
        write_atomic(&self.csv_path(meta), csv.as_bytes())?;
        let sidecar = serde_json::to_string_pretty(meta).expect("meta serializes");
        write_atomic(&self.meta_path(meta), (sidecar + "\n").as_bytes())?;
        Ok(())
    }
}
