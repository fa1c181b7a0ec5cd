//! Run manifest: which artifacts each stage produced, under which config
//! hash. Written as JSON next to the artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct StageRecord {
    /// Paths relative to the output directory.
    pub artifacts: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub toolkit_version: String,
    pub stages: BTreeMap<String, StageRecord>,
    /// Free-form notes, e.g. that the large model is a closed-form oracle
    /// rather than a checkpoint.
    pub notes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            stages: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn path(out_dir: &Path) -> PathBuf {
        out_dir.join("manifest.json")
    }

    /// Load the existing manifest or start a fresh one; a hash mismatch
    /// means the directory holds artifacts from a different config.
    pub fn load_or_new(out_dir: &Path, config_hash: &str) -> Result<Self> {
        let path = Self::path(out_dir);
        if !path.exists() {
            return Ok(Self::new(config_hash));
        }
        let text = std::fs::read_to_string(&path)?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if manifest.config_hash != config_hash {
            return Err(Error::Dependency(format!(
                "{} was produced by config {} but the current config hashes to {}",
                path.display(),
                manifest.config_hash,
                config_hash
            )));
        }
        Ok(manifest)
    }

    pub fn record_stage(&mut self, stage: &str, artifacts: Vec<PathBuf>, seconds: f64) {
        self.stages.insert(
            stage.to_string(),
            StageRecord { artifacts, wall_clock_seconds: seconds },
        );
    }

    pub fn note(&mut self, key: &str, value: &str) {
        self.notes.insert(key.to_string(), value.to_string());
    }

    pub fn stage(&self, name: &str) -> Result<&StageRecord> {
        self.stages
            .get(name)
            .ok_or_else(|| Error::Dependency(format!("stage '{name}' has not been run")))
    }

    /// Every recorded artifact must exist on disk.
    pub fn verify_artifacts(&self, out_dir: &Path) -> Result<()> {
        for (stage, record) in &self.stages {
            for artifact in &record.artifacts {
                let p = out_dir.join(artifact);
                if !p.exists() {
                    return Err(Error::Dependency(format!(
                        "stage '{stage}' lists missing artifact {}",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(Self::path(out_dir), text)?;
        Ok(())
    }
}
