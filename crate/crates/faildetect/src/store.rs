//! On-disk artifact format: `manifest.json` plus one headerless little-endian
//! `.bin` file per tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use faildetect_core::{PredictionArtifact, Split};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported format_version {found} (reader understands {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("manifest has no `{0}` tensor")]
    MissingTensor(String),
    #[error("tensor `{0}` is not expected in this artifact")]
    UnexpectedTensor(String),
    #[error("tensor `{tensor}` has dtype {found}, expected {expected}")]
    DType {
        tensor: String,
        expected: DType,
        found: DType,
    },
    #[error("tensor `{tensor}` declares shape {found:?}, expected {expected:?}")]
    DeclaredShape {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("shape mismatch in `{tensor}`: file holds {found} bytes, shape needs {expected}")]
    ShapeMismatch {
        tensor: String,
        expected: u64,
        found: u64,
    },
    #[error("tensor file path {0:?} must be a plain relative path")]
    UnsafePath(String),
    #[error(transparent)]
    Invalid(#[from] faildetect_core::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32,
    Int32,
}

impl std::fmt::Display for DType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DType::Float32 => "float32",
            DType::Int32 => "int32",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorDescriptor {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub file: String,
}

impl TensorDescriptor {
    fn byte_len(&self) -> u64 {
        self.shape.iter().product::<usize>() as u64 * 4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n_samples: usize,
    pub n_passes: usize,
    pub n_classes: usize,
    pub embed_dim: usize,
    /// Kept as a string so an unknown value surfaces as a named error.
    pub split: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<TensorDescriptor>,
}

impl Manifest {
    pub fn tensor(&self, name: &str) -> Option<&TensorDescriptor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn descriptor(name: &str, dtype: DType, shape: Vec<usize>) -> TensorDescriptor {
    TensorDescriptor {
        name: name.to_string(),
        dtype,
        shape,
        file: format!("{name}.bin"),
    }
}

/// Tensors an artifact with these scalars must carry, with their shapes.
fn expected_tensors(a: &PredictionArtifact) -> Vec<TensorDescriptor> {
    let (n, t, c, d) = (a.n_samples, a.n_passes, a.n_classes, a.embed_dim);
    let mut out = vec![
        descriptor("logits", DType::Float32, vec![n, t, c]),
        descriptor("labels", DType::Int32, vec![n]),
    ];
    if d > 0 {
        out.push(descriptor("embeddings", DType::Float32, vec![n, d]));
    }
    if a.last_weight.is_some() {
        out.push(descriptor("last_weight", DType::Float32, vec![c, d]));
    }
    if a.last_bias.is_some() {
        out.push(descriptor("last_bias", DType::Float32, vec![c]));
    }
    out
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Validates and writes `artifact` into `dir`, creating it if needed.
pub fn write_artifact(artifact: &PredictionArtifact, dir: &Path) -> Result<Manifest> {
    artifact.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tensors = expected_tensors(artifact);
    for t in &tensors {
        let bytes = match t.name.as_str() {
            "logits" => f32_bytes(&artifact.logits),
            "labels" => artifact
                .labels
                .iter()
                .flat_map(|&l| (l as i32).to_le_bytes())
                .collect(),
            "embeddings" => f32_bytes(&artifact.embeddings),
            "last_weight" => f32_bytes(artifact.last_weight.as_deref().unwrap_or_default()),
            "last_bias" => f32_bytes(artifact.last_bias.as_deref().unwrap_or_default()),
            _ => unreachable!("expected_tensors only yields known names"),
        };
        write_file(&dir.join(&t.file), &bytes)?;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        n_samples: artifact.n_samples,
        n_passes: artifact.n_passes,
        n_classes: artifact.n_classes,
        embed_dim: artifact.embed_dim,
        split: artifact.split.as_str().to_string(),
        meta: artifact.meta.clone(),
        tensors,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|source| StoreError::Manifest {
        path: path.clone(),
        source,
    })?;
    write_file(&path, &json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(StoreError::MissingFile(path));
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|source| StoreError::Manifest { path, source })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion {
            found: manifest.format_version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

fn read_tensor(dir: &Path, declared: &TensorDescriptor, expected: &TensorDescriptor) -> Result<Vec<u8>> {
    if declared.dtype != expected.dtype {
        return Err(StoreError::DType {
            tensor: declared.name.clone(),
            expected: expected.dtype,
            found: declared.dtype,
        });
    }
    if declared.shape != expected.shape {
        return Err(StoreError::DeclaredShape {
            tensor: declared.name.clone(),
            expected: expected.shape.clone(),
            found: declared.shape.clone(),
        });
    }
    let rel = Path::new(&declared.file);
    if declared.file.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(StoreError::UnsafePath(declared.file.clone()));
    }
    let path = dir.join(rel);
    if !path.is_file() {
        return Err(StoreError::MissingFile(path));
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() as u64 != expected.byte_len() {
        return Err(StoreError::ShapeMismatch {
            tensor: declared.name.clone(),
            expected: expected.byte_len(),
            found: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

fn f32_values(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect()
}

/// Reads and fully validates the artifact in `dir`.
pub fn read_artifact(dir: &Path) -> Result<PredictionArtifact> {
    let manifest = read_manifest(dir)?;
    let split: Split = manifest.split.parse()?;
    for (field, ok) in [
        ("n_samples", manifest.n_samples > 0),
        ("n_passes", manifest.n_passes > 0),
        ("n_classes", manifest.n_classes >= 2),
    ] {
        if !ok {
            return Err(faildetect_core::Error::InvalidField {
                field,
                reason: format!("{field} out of range in manifest"),
            }
            .into());
        }
    }
    let mut shell = PredictionArtifact {
        n_samples: manifest.n_samples,
        n_passes: manifest.n_passes,
        n_classes: manifest.n_classes,
        embed_dim: manifest.embed_dim,
        logits: Vec::new(),
        labels: Vec::new(),
        embeddings: Vec::new(),
        split,
        meta: manifest.meta.clone(),
        last_weight: manifest.tensor("last_weight").map(|_| Vec::new()),
        last_bias: manifest.tensor("last_bias").map(|_| Vec::new()),
    };
    let expected = expected_tensors(&shell);
    if let Some(extra) = manifest
        .tensors
        .iter()
        .find(|t| !expected.iter().any(|e| e.name == t.name))
    {
        return Err(StoreError::UnexpectedTensor(extra.name.clone()));
    }
    for exp in &expected {
        let declared = manifest
            .tensor(&exp.name)
            .ok_or_else(|| StoreError::MissingTensor(exp.name.clone()))?;
        let bytes = read_tensor(dir, declared, exp)?;
        match exp.name.as_str() {
            "logits" => shell.logits = f32_values(&bytes),
            "labels" => {
                shell.labels = bytes
                    .chunks_exact(4)
                    .enumerate()
                    .map(|(index, b)| {
                        let label = i32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                        u32::try_from(label).map_err(|_| faildetect_core::Error::LabelOutOfRange {
                            index,
                            label: i64::from(label),
                            n_classes: manifest.n_classes,
                        })
                    })
                    .collect::<std::result::Result<_, _>>()?
            }
            "embeddings" => shell.embeddings = f32_values(&bytes),
            "last_weight" => shell.last_weight = Some(f32_values(&bytes)),
            _ => shell.last_bias = Some(f32_values(&bytes)),
        }
    }
    shell.validate()?;
    Ok(shell)
}
