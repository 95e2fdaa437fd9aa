//! Result files: CSV tables, the binary trajectory file and the run manifest.
//!
//! Floating-point CSV fields use `{:.16e}`, i.e. 17 significant digits, so
//! every `f64` round-trips exactly.
//!
//! # Trajectory file layout
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header  8 bytes  magic "LSWTRJ01"
//!         u32      format version (1)
//!         u32      lattice radius M
//!         u64      number of paths
//!         u64      records per path
//! record  u64      path index
//!         f64      time
//!         f64      ||u||^2
//!         f64      ||v||^2
//!         2M+1 x (f64 re, f64 im)   u_{-M} .. u_M
//!         2M+1 x f64                v_{-M} .. v_M
//! ```
//!
//! Records appear path by path, in time order within a path.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use lsw_core::{Complex, ComplexSeq, LatticeState, RealSeq};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Result, SimError};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"LSWTRJ01";
pub const TRAJECTORY_VERSION: u32 = 1;

/// Formats a float with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV file in one piece.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(SimError::io(path))
}

/// Streaming writer for the binary trajectory format.
#[derive(Debug)]
pub struct TrajectoryWriter {
    path: PathBuf,
    out: BufWriter<File>,
    radius: usize,
}

impl TrajectoryWriter {
    pub fn create(path: &Path, radius: usize, n_paths: u64, records_per_path: u64) -> Result<Self> {
        let file = File::create(path).map_err(SimError::io(path))?;
        let mut w = TrajectoryWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            radius,
        };
        let mut header = Vec::with_capacity(32);
        header.extend_from_slice(TRAJECTORY_MAGIC);
        header.extend_from_slice(&TRAJECTORY_VERSION.to_le_bytes());
        header.extend_from_slice(&(radius as u32).to_le_bytes());
        header.extend_from_slice(&n_paths.to_le_bytes());
        header.extend_from_slice(&records_per_path.to_le_bytes());
        w.write(&header)?;
        Ok(w)
    }

    fn write(&mut self, bytes: &[u8]) -> Result<()> {
        self.out.write_all(bytes).map_err(SimError::io(&self.path))
    }

    pub fn record(&mut self, path: u64, t: f64, state: &LatticeState) -> Result<()> {
        assert_eq!(state.radius(), self.radius, "snapshot radius");
        let n = 2 * self.radius + 1;
        let mut buf = Vec::with_capacity(32 + 24 * n);
        buf.extend_from_slice(&path.to_le_bytes());
        buf.extend_from_slice(&t.to_le_bytes());
        buf.extend_from_slice(&state.u.norm_sq().to_le_bytes());
        buf.extend_from_slice(&state.v.norm_sq().to_le_bytes());
        for z in state.u.values() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        for x in state.v.values() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.write(&buf)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(SimError::io(&self.path))
    }
}

/// One decoded trajectory record.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub path: u64,
    pub t: f64,
    pub u_sq: f64,
    pub v_sq: f64,
    pub state: LatticeState,
}

/// Reads a whole trajectory file: `(radius, n_paths, records_per_path, records)`.
pub fn read_trajectory(path: &Path) -> Result<(usize, u64, u64, Vec<TrajectoryRecord>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(SimError::io(path))?;
    let bad = || SimError::Config(format!("{} is not a trajectory file", path.display()));
    if bytes.len() < 32 || &bytes[..8] != TRAJECTORY_MAGIC {
        return Err(bad());
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    if u32_at(8) != TRAJECTORY_VERSION {
        return Err(bad());
    }
    let radius = u32_at(12) as usize;
    let n_paths = u64_at(16);
    let per_path = u64_at(24);
    let n = 2 * radius + 1;
    let rec_len = 32 + 24 * n;
    let body = &bytes[32..];
    if body.len() % rec_len != 0 {
        return Err(bad());
    }
    let mut records = Vec::with_capacity(body.len() / rec_len);
    for start in (32..bytes.len()).step_by(rec_len) {
        let u: Vec<Complex> = (0..n)
            .map(|i| Complex::new(f64_at(start + 32 + 16 * i), f64_at(start + 40 + 16 * i)))
            .collect();
        let v: Vec<f64> = (0..n).map(|i| f64_at(start + 32 + 16 * n + 8 * i)).collect();
        records.push(TrajectoryRecord {
            path: u64_at(start),
            t: f64_at(start + 8),
            u_sq: f64_at(start + 16),
            v_sq: f64_at(start + 24),
            state: LatticeState::new(ComplexSeq::from_values(radius, u)?, RealSeq::from_values(radius, v)?)?,
        });
    }
    Ok((radius, n_paths, per_path, records))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Everything needed to reproduce a run, plus what it produced.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub verb: String,
    pub status: RunStatus,
    pub seed: u64,
    pub workers: usize,
    pub config: RunConfig,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub stages: Vec<Stage>,
    pub outputs: Vec<String>,
    pub results: serde_json::Map<String, serde_json::Value>,
    pub failures: Vec<String>,
    pub error: Option<String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// An output directory with its manifest, rewritten at every state change.
#[derive(Debug)]
pub struct RunDir {
    dir: PathBuf,
    manifest: Manifest,
    clock: Instant,
}

impl RunDir {
    pub fn create(dir: &Path, verb: &str, config: &RunConfig, workers: usize) -> Result<Self> {
        fs::create_dir_all(dir).map_err(SimError::io(dir))?;
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64());
        let run = RunDir {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                verb: verb.to_string(),
                status: RunStatus::Running,
                seed: config.noise.seed,
                workers,
                config: config.clone(),
                started_unix,
                wall_clock_seconds: 0.0,
                stages: Vec::new(),
                outputs: Vec::new(),
                results: serde_json::Map::new(),
                failures: Vec::new(),
                error: None,
            },
            clock: Instant::now(),
        };
        run.save()?;
        Ok(run)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn save(&self) -> Result<()> {
        let path = self.file(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(SimError::io(path))
    }

    /// Times `work` as a named stage.
    pub fn stage<T>(&mut self, name: &str, work: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = work();
        self.manifest.stages.push(Stage {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Registers a file written into the directory.
    pub fn output(&mut self, name: &str) {
        self.manifest.outputs.push(name.to_string());
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        write_csv(&self.file(name), header, rows)?;
        self.output(name);
        Ok(())
    }

    pub fn result(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.manifest.results.insert(key.to_string(), value.into());
    }

    pub fn fail_check(&mut self, message: String) {
        self.manifest.failures.push(message);
    }

    pub fn failures(&self) -> &[String] {
        &self.manifest.failures
    }

    pub fn results(&self) -> &serde_json::Map<String, serde_json::Value> {
        &self.manifest.results
    }

    /// Records the outcome and writes the final manifest.
    pub fn finish(&mut self, outcome: std::result::Result<(), &SimError>) -> Result<()> {
        self.manifest.wall_clock_seconds = self.clock.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => self.manifest.status = RunStatus::Complete,
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.error = Some(e.to_string());
            }
        }
        self.save()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let s = LatticeState::new(
            ComplexSeq::from_fn(2, |m| Complex::new(m as f64, -0.5)),
            RealSeq::from_fn(2, |m| 0.25 * m as f64),
        )
        .unwrap();
        let mut w = TrajectoryWriter::create(&path, 2, 2, 1).unwrap();
        w.record(0, 0.0, &s).unwrap();
        w.record(1, 0.0, &LatticeState::zeros(2)).unwrap();
        w.finish().unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 32 + 2 * (32 + 24 * 5));
        let (radius, n_paths, per_path, recs) = read_trajectory(&path).unwrap();
        assert_eq!((radius, n_paths, per_path), (2, 2, 1));
        assert_eq!(recs[0].state, s);
        assert_eq!(recs[0].u_sq, s.u.norm_sq());
        assert_eq!(recs[1].path, 1);
    }
}
