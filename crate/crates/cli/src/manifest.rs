use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub elapsed_secs: f64,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Not part of the reproducibility contract.
    pub timings: Timings,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hash_all(paths: &[PathBuf], relative_to: Option<&Path>) -> Result<Vec<FileHash>, CliError> {
    paths
        .iter()
        .map(|p| {
            let shown = relative_to
                .and_then(|base| p.strip_prefix(base).ok())
                .unwrap_or(p)
                .display()
                .to_string();
            Ok(FileHash {
                path: shown,
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    start: std::time::Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &impl Serialize, seeds: Vec<u64>) -> Self {
        Self {
            command: command.into(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seeds,
            inputs: Vec::new(),
            start: std::time::Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn finish(self, out: &Path, outputs: &[PathBuf]) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").into(),
            config: self.config,
            seeds: self.seeds,
            inputs: hash_all(&self.inputs, None)?,
            outputs: hash_all(outputs, Some(out))?,
            timings: Timings {
                elapsed_secs: self.start.elapsed().as_secs_f64(),
            },
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(CliError::runtime)?;
        std::fs::write(out.join(MANIFEST), text).map_err(CliError::runtime)
    }
}
