//! Output directories with a checksum manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, CONFIG_FILE};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects files written under one root and their checksums.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes a checksummed artifact.
    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let bytes = contents.as_ref();
        self.write_untracked(rel, bytes)?;
        self.artifacts.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes a file that is left out of the manifest, such as wall-clock timings.
    pub fn write_untracked(&self, rel: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }

    /// Records the checksum of a file some other code already wrote.
    pub fn track(&mut self, rel: &str) -> CliResult<()> {
        let path = self.path(rel);
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        self.artifacts.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn checksum(&self, rel: &str) -> Option<&str> {
        self.artifacts.get(rel).map(String::as_str)
    }

    pub fn artifacts(&self) -> &BTreeMap<String, String> {
        &self.artifacts
    }

    /// Writes `config.txt` and `manifest.json`.
    pub fn finish(mut self, command: &str, config: &RunConfig) -> CliResult<BTreeMap<String, String>> {
        self.write(CONFIG_FILE, config.to_text())?;
        let cfg: Map<String, Value> = {
            let kv = config.to_key_values();
            kv.keys()
                .map(|k| (k.to_string(), Value::String(kv.get(k).unwrap_or_default().to_string())))
                .collect()
        };
        let manifest = json!({
            "command": command,
            "seed": config.seed,
            "config": cfg,
            "artifacts": self.artifacts,
        });
        self.write_untracked(MANIFEST_FILE, to_json_text(&manifest))?;
        Ok(self.artifacts)
    }
}

pub fn to_json_text(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    text
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}
