//! Run manifests: the record that ties a resolved config to every file an
//! experiment wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentManifest {
    pub mode: String,
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    /// Resolved-config file, relative to the manifest's directory.
    pub resolved_config: String,
    /// Files shared by all seeds (world/instance documents), relative paths.
    pub shared_outputs: Vec<String>,
    /// Per-seed output files, relative paths.
    pub outputs: BTreeMap<u64, Vec<String>>,
    /// Wall-clock seconds per seed. Not part of the determinism contract.
    pub wall_clock_secs: BTreeMap<u64, f64>,
}

impl ExperimentManifest {
    pub fn file_name(&self) -> String {
        format!("manifest_{}_{}.json", self.mode, self.config_hash)
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.file_name());
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// All data files (shared + per-seed), relative to the manifest dir.
    pub fn all_files(&self) -> Vec<&str> {
        let mut files: Vec<&str> = vec![self.resolved_config.as_str()];
        files.extend(self.shared_outputs.iter().map(String::as_str));
        for list in self.outputs.values() {
            files.extend(list.iter().map(String::as_str));
        }
        files
    }

    /// Every referenced file exists under `dir`.
    pub fn verify_complete(&self, dir: &Path) -> Result<()> {
        for file in self.all_files() {
            let path = dir.join(file);
            if !path.is_file() {
                anyhow::bail!("manifest references missing file {}", path.display());
            }
        }
        Ok(())
    }
}
