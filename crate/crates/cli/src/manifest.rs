//! Run manifest: what was run, on which inputs, with which seed and versions.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Versions {
    pub mildhjb: &'static str,
    pub format: u32,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub inputs_digest: String,
    pub model_digest: Option<String>,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub outputs: Vec<String>,
    pub passed: bool,
    /// Command-specific summary numbers.
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, inputs: &[&str]) -> Self {
        let mut h = Sha256::new();
        for part in inputs {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        Self {
            command: command.to_string(),
            argv: std::env::args().skip(1).collect(),
            inputs_digest: hex::encode(h.finalize()),
            model_digest: None,
            seed: None,
            versions: Versions { mildhjb: env!("CARGO_PKG_VERSION"), format: 1 },
            outputs: vec![],
            passed: true,
            summary: serde_json::Value::Null,
        }
    }

    pub fn output(&mut self, path: &Path) -> PathBuf {
        self.outputs.push(path.display().to_string());
        path.to_path_buf()
    }

    /// Written without timestamps so reruns reproduce it byte for byte.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
