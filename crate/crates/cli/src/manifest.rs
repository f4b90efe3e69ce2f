//! Run manifests: enough to rerun a command and check its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        Ok(Self { path: path.display().to_string(), bytes: data.len() as u64, sha256: sha256_hex(&data) })
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub threads: usize,
    pub config: BTreeMap<String, Value>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Named phases in run order with their wall time in seconds.
    pub wall_times: Vec<(String, f64)>,
}

/// Collects manifest fields while a command runs.
pub struct Recorder {
    command: String,
    started: Instant,
    phase: Instant,
    wall_times: Vec<(String, f64)>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        let now = Instant::now();
        Self {
            command: command.to_string(),
            started: now,
            phase: now,
            wall_times: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: BTreeMap::new(),
        }
    }

    /// Ends the current phase under `name`.
    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.wall_times.push((name.to_string(), (now - self.phase).as_secs_f64()));
        self.phase = now;
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    /// Hashes all recorded files and writes the manifest as pretty JSON.
    pub fn write(mut self, path: &Path, config: BTreeMap<String, Value>) -> Result<()> {
        self.wall_times.push(("total".into(), self.started.elapsed().as_secs_f64()));
        let hash = |v: &[PathBuf]| v.iter().map(|p| FileRecord::of(p)).collect::<Result<Vec<_>>>();
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            argv: std::env::args().collect(),
            threads: rayon::current_num_threads(),
            config,
            seeds: self.seeds,
            inputs: hash(&self.inputs)?,
            outputs: hash(&self.outputs)?,
            wall_times: self.wall_times,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}

/// Manifest path for a single-file output: `<file>.manifest.json`.
pub fn beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vectors() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_sits_beside_the_output() {
        assert_eq!(beside(Path::new("out/a.avx")), Path::new("out/a.avx.manifest.json"));
    }
}
