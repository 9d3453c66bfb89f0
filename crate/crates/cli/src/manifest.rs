//! Reproducibility manifest written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the serialized effective configuration.
    pub config_sha256: String,
    /// The configuration after CLI overrides, inlined for auditability.
    pub effective_config: Config,
    pub seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub timing_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &Config) -> anyhow::Result<RunManifest> {
        let serialized = serde_json::to_string(cfg)?;
        let mut versions = BTreeMap::new();
        versions.insert("osse-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("osse-core".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Ok(RunManifest {
            command: command.to_string(),
            config_sha256: {
                let digest = Sha256::digest(serialized.as_bytes());
                digest.iter().map(|b| format!("{b:02x}")).collect()
            },
            effective_config: cfg.clone(),
            seeds: Vec::new(),
            versions,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timing_seconds: 0.0,
        })
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<()> {
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
