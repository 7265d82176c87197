//! Provenance record written next to every output file.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
    /// SHA-256 of each input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each output file, keyed by path.
    pub outputs: BTreeMap<String, String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

impl RunManifest {
    pub fn start(command: Vec<String>, config: serde_json::Value, seed: u64) -> Self {
        let t = now();
        Self {
            command,
            config,
            seed,
            version: VERSION.to_string(),
            started_at: t,
            finished_at: t,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    /// Stamps the finish time and writes pretty JSON.
    pub fn finish(mut self, path: &Path) -> Result<Self> {
        self.finished_at = now();
        std::fs::write(path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// `out.json` pairs with `out.manifest.json`.
    pub fn path_for(output: &Path) -> std::path::PathBuf {
        let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        output.with_file_name(format!("{stem}.manifest.json"))
    }
}
