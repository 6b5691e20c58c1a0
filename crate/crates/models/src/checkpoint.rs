//! Checkpoint directories: `manifest.json` plus one little-endian `f32`
//! row-major `.bin` file per named tensor.

use std::fs;
use std::path::Path;

use qgf_tensor::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("tensor `{name}`: {detail}")]
    ShapeMismatch { name: String, detail: String },
    #[error("malformed manifest: {0}")]
    Manifest(String),
}

fn io(path: &Path, e: impl std::fmt::Display) -> CheckpointError {
    CheckpointError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gan,
    RnnAe,
    RnnVae,
    LstmAe,
    LstmVae,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gan => "gan",
            ModelKind::RnnAe => "rnn-ae",
            ModelKind::RnnVae => "rnn-vae",
            ModelKind::LstmAe => "lstm-ae",
            ModelKind::LstmVae => "lstm-vae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Gan, Self::RnnAe, Self::RnnVae, Self::LstmAe, Self::LstmVae]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model: ModelKind,
    /// Architecture and training configuration, model-specific.
    pub config: serde_json::Value,
    pub seed: u64,
    pub iterations: u64,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    pub fn new(model: ModelKind, config: serde_json::Value, seed: u64, iterations: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model,
            config,
            seed,
            iterations,
            tensors: Vec::new(),
        }
    }
}

/// Manifest and parameters; values are held at `f32` precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub manifest: Manifest,
    pub params: ParamSet,
}

impl ModelCheckpoint {
    /// Fills the tensor table from `params`, rounds every value to `f32` and
    /// tags the set with the manifest seed, as `load_checkpoint` does.
    pub fn new(mut manifest: Manifest, params: ParamSet) -> Self {
        let mut params = params.with_seed(manifest.seed);
        params.quantize_f32();
        manifest.tensors = params
            .iter()
            .map(|(name, p)| TensorEntry {
                name: name.to_string(),
                shape: p.value.shape().to_vec(),
                file: format!("{name}.bin"),
            })
            .collect();
        Self { manifest, params }
    }
}

/// Writes into a sibling temporary directory, then renames it over `dir`.
pub fn save_checkpoint(ckpt: &ModelCheckpoint, dir: &Path) -> Result<(), CheckpointError> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| io(&parent, e))?;
    let tmp = tempfile::Builder::new()
        .prefix(".ckpt-")
        .tempdir_in(&parent)
        .map_err(|e| io(&parent, e))?;

    for entry in &ckpt.manifest.tensors {
        let value = ckpt
            .params
            .value(&entry.name)
            .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        if value.shape() != entry.shape.as_slice() {
            return Err(CheckpointError::ShapeMismatch {
                name: entry.name.clone(),
                detail: format!("manifest {:?}, parameter {:?}", entry.shape, value.shape()),
            });
        }
        let bytes: Vec<u8> = value
            .data()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();
        let path = tmp.path().join(&entry.file);
        fs::write(&path, bytes).map_err(|e| io(&path, e))?;
    }
    let manifest = serde_json::to_string_pretty(&ckpt.manifest)
        .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    let path = tmp.path().join(MANIFEST_FILE);
    fs::write(&path, manifest + "\n").map_err(|e| io(&path, e))?;

    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    let staged = tmp.keep();
    fs::rename(&staged, dir).map_err(|e| io(dir, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<ModelCheckpoint, CheckpointError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    let found = raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| CheckpointError::Manifest("missing format_version".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(CheckpointError::VersionMismatch {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let manifest: Manifest =
        serde_json::from_value(raw).map_err(|e| CheckpointError::Manifest(e.to_string()))?;

    let mut params = ParamSet::new(manifest.seed);
    for entry in &manifest.tensors {
        if entry.file.contains(['/', '\\']) || entry.file.starts_with("..") {
            return Err(CheckpointError::Manifest(format!("bad tensor file `{}`", entry.file)));
        }
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| io(&path, e))?;
        let numel: usize = entry.shape.iter().product();
        if bytes.len() != 4 * numel || numel == 0 {
            return Err(CheckpointError::ShapeMismatch {
                name: entry.name.clone(),
                detail: format!("{} bytes for shape {:?}", bytes.len(), entry.shape),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let tensor = Tensor::new(entry.shape.clone(), data).map_err(|e| CheckpointError::ShapeMismatch {
            name: entry.name.clone(),
            detail: e.to_string(),
        })?;
        params
            .insert(entry.name.clone(), tensor)
            .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    }
    Ok(ModelCheckpoint { manifest, params })
}
