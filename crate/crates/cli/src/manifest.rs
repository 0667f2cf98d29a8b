//! Per-run output directory and its manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub resolved_config: RunConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub tool_version: String,
    pub status: RunStatus,
    /// Only the manifest carries timing, so every other file is reproducible.
    pub wall_time_s: Option<f64>,
    pub files: Vec<FileEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<out>/<command>-<confighash>-<seed>`.
pub fn run_dir_name(command: &str, cfg: &RunConfig) -> String {
    format!("{command}-{}-{}", cfg.hash12(), cfg.seed)
}

/// Owns a run directory: writes the manifest first, then records every
/// artifact with its checksum.
pub struct RunWriter {
    manifest: RunManifest,
    started: Instant,
}

impl RunWriter {
    pub fn create(command: &str, cfg: &RunConfig, config_path: Option<&Path>, out: &Path) -> Result<Self> {
        let dir = out.join(run_dir_name(command, cfg));
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let writer = RunWriter {
            manifest: RunManifest {
                command: command.to_string(),
                config_path: config_path.map(Path::to_path_buf),
                resolved_config: cfg.clone(),
                output_dir: dir,
                seed: cfg.seed,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                status: RunStatus::Running,
                wall_time_s: None,
                files: Vec::new(),
                error: None,
            },
            started: Instant::now(),
        };
        writer.flush()?;
        Ok(writer)
    }

    pub fn dir(&self) -> &Path {
        &self.manifest.output_dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir().join(name);
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.manifest.files.retain(|f| f.name != name);
        self.manifest.files.push(FileEntry {
            name: name.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    fn flush(&self) -> Result<()> {
        let path = self.dir().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        self.manifest.status = RunStatus::Complete;
        self.manifest.wall_time_s = Some(self.started.elapsed().as_secs_f64());
        self.flush()?;
        Ok(self.manifest)
    }

    pub fn fail(mut self, err: &anyhow::Error) -> Result<RunManifest> {
        self.manifest.status = RunStatus::Failed;
        self.manifest.wall_time_s = Some(self.started.elapsed().as_secs_f64());
        self.manifest.error = Some(format!("{err:#}"));
        self.flush()?;
        Ok(self.manifest)
    }
}

/// Recomputes every listed checksum; returns the names that do not match.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let mut bad = Vec::new();
    for f in &manifest.files {
        match std::fs::read(dir.join(&f.name)) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 && bytes.len() as u64 == f.bytes => {}
            _ => bad.push(f.name.clone()),
        }
    }
    Ok(bad)
}
