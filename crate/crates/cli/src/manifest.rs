//! Run manifests: config echo, version, seed and checksums of emitted files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::io;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the output directory (inputs keep their file name).
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(name: &str, bytes: &[u8]) -> Self {
        Self { file: name.into(), bytes: bytes.len(), sha256: io::sha256_hex(bytes) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// Seconds since the epoch; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
    pub config: Option<ExperimentConfig>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
        })
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&ExperimentConfig>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: config.map(|c| c.seed),
            timestamp: timestamp(),
            config: config.cloned(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.inputs.push(FileDigest::of(&name, bytes));
    }

    /// Writes `bytes` atomically under `dir` and records its checksum.
    pub fn emit(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        io::write_atomic(&dir.join(name), bytes)?;
        self.outputs.push(FileDigest::of(name, bytes));
        Ok(())
    }

    pub fn finish(&self, dir: &Path) -> Result<String> {
        let name = format!("manifest_{}.json", self.command);
        io::write_atomic(&dir.join(&name), &io::to_json(self))?;
        Ok(name)
    }
}
