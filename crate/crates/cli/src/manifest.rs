use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: its config, and digests of what it read and wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

fn digest(path: &Path, shown: String) -> Result<FileDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest { path: shown, sha256: hex::encode(Sha256::digest(&bytes)) })
}

/// Collects the files a command touches, then writes `manifest.json` into `out_dir`.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: impl Serialize) -> Result<Self> {
        Ok(Self { command: command.to_owned(), config: serde_json::to_value(config)?, inputs: vec![], outputs: vec![] })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(self, out_dir: &Path) -> Result<()> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| digest(p, p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())))
            .collect::<Result<_>>()?;
        // outputs are recorded relative to the run directory so two runs compare equal
        let outputs = self
            .outputs
            .iter()
            .map(|p| digest(p, p.strip_prefix(out_dir).unwrap_or(p).display().to_string()))
            .collect::<Result<_>>()?;
        let manifest = RunManifest {
            tool: "gwil",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config,
            inputs,
            outputs,
        };
        let path = out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
