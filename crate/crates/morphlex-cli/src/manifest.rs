//! Run manifests: resolved configuration plus content digests of every
//! input and output, proving byte-level reproducibility of a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// Input path (as given) to sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub duration_ms: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_ms: 0,
        }
    }

    pub fn record_input(&mut self, path: &Path) -> std::io::Result<()> {
        let bytes = fs::read(path)?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn record_output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
