use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use riskcmdp::grc::TraceRow;
use riskcmdp::raster::RasterPoint;
use riskcmdp::sweep::SweepRow;

#[derive(Debug, Serialize)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub kind: &'static str,
}

/// Index of everything a command wrote. Written last.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub config: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    pub seconds: f64,
}

pub const MANIFEST: &str = "manifest.json";

pub struct OutDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn record(&mut self, name: &str, kind: &'static str) -> PathBuf {
        self.artifacts.push(Artifact {
            path: name.to_string(),
            kind,
        });
        self.root.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, kind: &'static str, value: &T) -> io::Result<()> {
        let path = self.record(name, kind);
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(path, text)
    }

    pub fn csv(&mut self, name: &str, kind: &'static str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let path = self.record(name, kind);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()
    }

    pub fn finish(self, manifest: impl FnOnce(Vec<Artifact>) -> RunManifest) -> io::Result<RunManifest> {
        let root = self.root.clone();
        let manifest = manifest(self.artifacts);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(root.join(MANIFEST), text)?;
        Ok(manifest)
    }
}

/// 17 significant digits, enough to round-trip any double.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub const TRACE_HEADER: [&str; 8] = [
    "seed",
    "k",
    "restarted",
    "reward_value",
    "constraint_value",
    "feasible",
    "best_reward",
    "residual",
];

pub fn trace_rows(seed: u64, trace: &[TraceRow]) -> Vec<Vec<String>> {
    trace
        .iter()
        .map(|r| {
            vec![
                seed.to_string(),
                r.k.to_string(),
                r.restarted.to_string(),
                num(r.reward_value),
                num(r.constraint_value),
                r.feasible.to_string(),
                opt(r.best_reward),
                opt(r.residual),
            ]
        })
        .collect()
}

pub const RASTER_HEADER: [&str; 4] = ["t", "y", "action", "q"];

pub fn raster_rows(points: &[RasterPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| vec![p.t.to_string(), num(p.y), p.action.to_string(), num(p.q)])
        .collect()
}

pub const SWEEP_HEADER: [&str; 6] = ["axis_value", "v_r", "v_c", "feasible", "iterations", "seconds"];

pub fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                num(r.axis_value),
                opt(r.v_r),
                opt(r.v_c),
                r.feasible.to_string(),
                r.iterations.to_string(),
                num(r.seconds),
            ]
        })
        .collect()
}
