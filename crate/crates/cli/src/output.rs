//! Output directory with a checksummed manifest of every written file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<String>,
    pub output_dir: String,
    /// No random input beyond fixed seeds; reruns reproduce every listed file.
    pub deterministic: bool,
    pub wall_clock_seconds: f64,
    pub stats: serde_json::Value,
    pub files: Vec<FileEntry>,
}

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
    started: Instant,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(CliError::io)?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        fs::write(self.dir.join(name), content).map_err(CliError::io)?;
        let digest = Sha256::digest(content.as_bytes());
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        log::info!("wrote {}", self.dir.join(name).display());
        self.files.push(FileEntry { path: name.to_string(), sha256 });
        Ok(())
    }

    pub fn finish(self, subcommand: &str, inputs: &[PathBuf], stats: serde_json::Value) -> Result<(), CliError> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            output_dir: self.dir.display().to_string(),
            deterministic: true,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            stats,
            files: self.files,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
        fs::write(self.dir.join("manifest.json"), text).map_err(CliError::io)
    }
}
