use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{write_json, FileDigest};

/// Provenance record written next to every output as `<out>.run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Command line as invoked, program name excluded.
    pub argv: Vec<String>,
    /// Every flag after defaults were applied.
    pub flags: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: serde_json::Value,
    pub duration_secs: f64,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".run.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> Result<()> {
        write_json(&manifest_path(out), self)
    }
}
