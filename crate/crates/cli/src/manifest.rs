use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(path: &Path) -> CliResult<Self> {
        Ok(FileEntry {
            path: path.to_path_buf(),
            sha256: sha256_hex(&std::fs::read(path)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub config_hash: Option<String>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub started_unix: f64,
    pub elapsed_seconds: f64,
    pub warnings: Vec<String>,
    pub exit_code: i32,
    pub error: Option<String>,
}

/// Collects what a run touched; written once at the end.
pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        ManifestBuilder {
            manifest: RunManifest {
                tool: "geomag".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                arguments: std::env::args().skip(1).collect(),
                config_hash: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_unix: started,
                elapsed_seconds: 0.0,
                warnings: Vec::new(),
                exit_code: 0,
                error: None,
            },
            clock: Instant::now(),
        }
    }

    pub fn config_hash(&mut self, h: String) {
        self.manifest.config_hash = Some(h);
    }

    pub fn input(&mut self, p: &Path) -> CliResult<()> {
        self.manifest.inputs.push(FileEntry::of(p)?);
        Ok(())
    }

    pub fn output(&mut self, p: &Path) -> CliResult<()> {
        self.manifest.outputs.push(FileEntry::of(p)?);
        Ok(())
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.manifest.warnings.push(w.into());
    }

    pub fn finish(mut self, path: &Path, exit_code: i32, error: Option<String>) -> std::io::Result<()> {
        self.manifest.elapsed_seconds = self.clock.elapsed().as_secs_f64();
        self.manifest.exit_code = exit_code;
        self.manifest.error = error;
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(path, text)
    }
}
