//! Emitted files and the run manifest that lists them.

use std::fs;
use std::path::{Component, Path};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A file produced by a command, held in memory until the run finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<Vec<u8>>) -> Self {
        Artifact {
            name: name.into(),
            bytes: contents.into(),
        }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub exit_code: i32,
    pub notes: Vec<String>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            started_unix: unix_now(),
            finished_unix: 0,
            exit_code: 0,
            notes: Vec::new(),
            artifacts: Vec::new(),
        }
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Rejects names that could escape the output directory.
fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && Path::new(name)
            .components()
            .all(|c| matches!(c, Component::Normal(_)))
        && !name.contains('/')
        && !name.contains('\\');
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!("refusing to write artifact {name:?}")))
    }
}

/// Writes every artifact into `dir`, then the manifest listing them.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact], mut manifest: RunManifest) -> Result<RunManifest> {
    for a in artifacts {
        check_name(&a.name)?;
    }
    fs::create_dir_all(dir)?;
    manifest.artifacts.clear();
    for a in artifacts {
        fs::write(dir.join(&a.name), &a.bytes)?;
        manifest.artifacts.push(ArtifactEntry {
            file: a.name.clone(),
            sha256: a.sha256(),
            bytes: a.bytes.len(),
        });
    }
    manifest.finished_unix = unix_now();
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(manifest)
}
