use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha1::{Digest, Sha1};

use crate::error::CliResult;

/// Provenance record written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    /// Resolved settings after config file, environment and flags.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    /// Same digest as `git hash-object`.
    pub git_blob_sha1: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path)?;
        Ok(Self { path: path.display().to_string(), bytes: bytes.len() as u64, git_blob_sha1: git_blob_sha1(&bytes) })
    }
}

pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: "mcl",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            argv: std::env::args().collect(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn inputs(mut self, paths: &[&Path]) -> CliResult<Self> {
        for p in paths {
            self.inputs.push(FileRecord::of(p)?);
        }
        Ok(self)
    }

    pub fn write(mut self, outputs: &[PathBuf], to: &Path) -> CliResult<()> {
        for p in outputs {
            self.outputs.push(FileRecord::of(p)?);
        }
        fs::write(to, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(())
    }
}
