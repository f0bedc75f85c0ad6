//! Run artifacts: atomic file writes and the per-run manifest.

use chrono::{SecondsFormat, Utc};
use launchopt::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Writes through a sibling temp file and renames into place, so a crash
/// mid-write never leaves a truncated artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut tmp_name = path.as_os_str().to_owned();
    tmp_name.push(".tmp");
    let tmp = PathBuf::from(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Provenance record written next to every command's outputs: enough to
/// re-run the command and to tie the artifacts back to their exact inputs.
/// The timestamp is informational; all CSV outputs depend only on the
/// scenario, seed, and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub timestamp: String,
    pub flags: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, scenario_hash: String, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            scenario_hash,
            seed,
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
            flags: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn flag(mut self, key: &str, value: impl ToString) -> Self {
        self.flags.insert(key.to_string(), value.to_string());
        self
    }

    pub fn push_output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    /// Writes `manifest.json` into `dir` and returns its path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&path, (text + "\n").as_bytes())?;
        Ok(path)
    }
}
