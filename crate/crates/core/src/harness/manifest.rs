use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_file(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// Seed handed to one task, with the inputs it was derived from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSeed {
    pub stage: String,
    pub indices: Vec<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub outputs: Vec<FileRecord>,
    pub seeds: Vec<TaskSeed>,
    pub wall_clock_seconds: f64,
}

/// Provenance of one recipe run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// How task seeds are derived, so other implementations can reproduce the streams.
    pub seed_derivation: String,
    pub config: ExperimentConfig,
    pub stages: Vec<StageRecord>,
}

pub const SEED_DERIVATION: &str = "G = 0x9e3779b97f4a7c15; splitmix64(x) = SplitMix64 finalizer of x + G (wrapping); h = splitmix64(master_seed); for each byte b of the UTF-8 stage label: h = splitmix64((h ^ b) * 0x100000001b3); for each index i: h = splitmix64(h ^ splitmix64(i + G)); the task stream is ChaCha8Rng::seed_from_u64(h)";

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed_derivation: SEED_DERIVATION.to_string(),
            config: config.clone(),
            stages: Vec::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Collects the outputs and seeds of one stage while it runs.
pub struct StageRecorder {
    name: String,
    root: PathBuf,
    started: Instant,
    outputs: Vec<FileRecord>,
    seeds: Vec<TaskSeed>,
}

impl StageRecorder {
    pub fn start(name: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        StageRecorder {
            name: name.into(),
            root: root.into(),
            started: Instant::now(),
            outputs: Vec::new(),
            seeds: Vec::new(),
        }
    }

    /// Writes `bytes` under the output root and records its hash.
    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(relative);
        write_file(&path, bytes)?;
        self.outputs.push(FileRecord {
            path: relative.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Records a file some other code already wrote.
    pub fn record(&mut self, relative: &str) -> Result<()> {
        let sha256 = file_sha256(self.root.join(relative))?;
        self.outputs.push(FileRecord {
            path: relative.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn seed(&mut self, stage: &str, indices: &[u64], seed: u64) {
        self.seeds.push(TaskSeed {
            stage: stage.to_string(),
            indices: indices.to_vec(),
            seed,
        });
    }

    pub fn finish(self) -> StageRecord {
        StageRecord {
            name: self.name,
            outputs: self.outputs,
            seeds: self.seeds,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        }
    }
}
