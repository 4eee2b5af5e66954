use anyhow::Result;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// One manifest per run, written next to the outputs. Re-running the
/// recorded command reproduces the outputs byte-identically (timestamps
/// aside).
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<PathBuf>,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub struct ManifestWriter {
    command: String,
    config: serde_json::Value,
    seed: u64,
    started: u64,
}

impl ManifestWriter {
    pub fn start(command: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        Ok(ManifestWriter {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            started: now_unix(),
        })
    }

    /// Writes `<first output>.manifest.json` (or `manifest.json` inside a
    /// directory output).
    pub fn finish(self, outputs: &[&Path]) -> Result<()> {
        let first = outputs.first().expect("a run has at least one output");
        let path = if first.is_dir() {
            first.join("manifest.json")
        } else {
            let mut name = first
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "out".to_string());
            name.push_str(".manifest.json");
            first.with_file_name(name)
        };
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            seed: self.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started,
            finished_unix: now_unix(),
            outputs: outputs.iter().map(|p| p.to_path_buf()).collect(),
        };
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}
