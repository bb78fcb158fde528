//! JSON run manifest.

use std::path::Path;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub version: String,
    /// Seconds since the Unix epoch at write time.
    pub finished_at: u64,
    pub wall_time_secs: f64,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
    /// Command-specific results.
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: &RunConfig,
        wall_time_secs: f64,
        outputs: Vec<String>,
        results: serde_json::Value,
    ) -> Self {
        Self {
            command: command.to_string(),
            seeds: config.seeds.clone(),
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            finished_at: SystemTime::now()
                .duration_since(SystemTime::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_time_secs,
            outputs,
            results,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
