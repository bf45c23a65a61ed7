//! Run manifest: what was produced, with checksums, and the pass rollup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};
use crate::output::sha256_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub kind: String,
    pub files: Vec<FileEntry>,
    /// `None` when the block has no pass criterion or failed with an error.
    pub pass: Option<bool>,
    pub error: Option<String>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the effective configuration (after overrides).
    pub config_hash: String,
    pub artifact_version: String,
    pub seed: u64,
    pub blocks: Vec<BlockEntry>,
    /// Shared files (summary, effective config).
    pub files: Vec<FileEntry>,
    pub wall_clock_s: f64,
    /// Every block ran without error and no check reported a failure.
    pub pass: bool,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn any_error(&self) -> bool {
        self.blocks.iter().any(|b| b.error.is_some())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(io_err(&path))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Check that every listed file exists with its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let all = self.files.iter().chain(self.blocks.iter().flat_map(|b| &b.files));
        for f in all {
            let path = dir.join(&f.path);
            if !path.exists() {
                return Err(CliError::Manifest(format!("{} is missing", f.path)));
            }
            let sum = sha256_file(&path)?;
            if sum != f.sha256 {
                return Err(CliError::Manifest(format!(
                    "{} has checksum {sum}, manifest records {}",
                    f.path, f.sha256
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn file_entry(dir: &Path, name: &str) -> Result<FileEntry> {
    let path = dir.join(name);
    let bytes = std::fs::metadata(&path).map_err(io_err(&path))?.len();
    Ok(FileEntry {
        path: name.to_string(),
        sha256: sha256_file(&path)?,
        bytes,
    })
}
