#![allow(dead_code)]

use std::fs;
use std::path::Path;

use faildetect::store::{read_manifest, write_artifact, StoreError, MANIFEST_FILE};
use faildetect_core::{PredictionArtifact, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Any finite f32, including subnormals, signed zeros and extremes.
fn finite_f32(rng: &mut ChaCha8Rng) -> f32 {
    match rng.random_range(0..8) {
        0 => -0.0,
        1 => f32::MIN_POSITIVE / 4.0,
        2 => f32::MAX,
        3 => f32::MIN,
        _ => loop {
            let v = f32::from_bits(rng.random());
            if v.is_finite() {
                break v;
            }
        },
    }
}

pub fn random_artifact(seed: u64) -> PredictionArtifact {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=20);
    let t = rng.random_range(1..=4);
    let c = rng.random_range(2..=6);
    let d = if rng.random_bool(0.3) { 0 } else { rng.random_range(1..=5) };
    let logits = (0..n * t * c).map(|_| finite_f32(&mut rng)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..c as u32)).collect();
    let split = [Split::Train, Split::Val, Split::Test][rng.random_range(0..3)];
    let mut a = PredictionArtifact::new(n, t, c, logits, labels, split).unwrap();
    if d > 0 {
        let emb = (0..n * d).map(|_| finite_f32(&mut rng)).collect();
        a = a.with_embeddings(d, emb).unwrap();
        if rng.random_bool(0.5) {
            let w = (0..c * d).map(|_| finite_f32(&mut rng)).collect();
            let b = rng
                .random_bool(0.5)
                .then(|| (0..c).map(|_| finite_f32(&mut rng)).collect());
            a = a.with_last_layer(w, b).unwrap();
        }
    }
    a.meta.insert("seed".into(), seed.to_string());
    a
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub fn bitwise_equal(a: &PredictionArtifact, b: &PredictionArtifact) -> bool {
    (a.n_samples, a.n_passes, a.n_classes, a.embed_dim) == (b.n_samples, b.n_passes, b.n_classes, b.embed_dim)
        && bits(&a.logits) == bits(&b.logits)
        && a.labels == b.labels
        && bits(&a.embeddings) == bits(&b.embeddings)
        && a.split == b.split
        && a.meta == b.meta
        && a.last_weight.as_deref().map(bits) == b.last_weight.as_deref().map(bits)
        && a.last_bias.as_deref().map(bits) == b.last_bias.as_deref().map(bits)
}

/// A valid artifact with embeddings and a last layer, for corruption.
pub fn base_artifact() -> PredictionArtifact {
    PredictionArtifact::new(3, 2, 3, (0..18).map(|v| v as f32 / 7.0).collect(), vec![0, 1, 2], Split::Val)
        .unwrap()
        .with_embeddings(2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        .unwrap()
        .with_last_layer(vec![1.0; 6], Some(vec![0.0; 3]))
        .unwrap()
}

fn edit_manifest(dir: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join(MANIFEST_FILE);
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    f(&mut v);
    fs::write(path, serde_json::to_vec(&v).unwrap()).unwrap();
}

fn tensor_index(dir: &Path, name: &str) -> usize {
    read_manifest(dir).unwrap().tensors.iter().position(|t| t.name == name).unwrap()
}

fn patch_bytes(dir: &Path, file: &str, offset: usize, bytes: [u8; 4]) {
    let path = dir.join(file);
    let mut data = fs::read(&path).unwrap();
    data[offset..offset + 4].copy_from_slice(&bytes);
    fs::write(path, data).unwrap();
}

pub struct MalformedCase {
    pub name: &'static str,
    pub corrupt: fn(&Path),
    pub expected: fn(&StoreError) -> bool,
}

/// Every way a directory can be malformed, with the named error it must produce.
pub fn malformed_cases() -> Vec<MalformedCase> {
    use faildetect_core::Error as Core;
    vec![
        MalformedCase {
            name: "missing manifest",
            corrupt: |d| fs::remove_file(d.join(MANIFEST_FILE)).unwrap(),
            expected: |e| matches!(e, StoreError::MissingFile(p) if p.ends_with(MANIFEST_FILE)),
        },
        MalformedCase {
            name: "manifest not JSON",
            corrupt: |d| fs::write(d.join(MANIFEST_FILE), b"{not json").unwrap(),
            expected: |e| matches!(e, StoreError::Manifest { .. }),
        },
        MalformedCase {
            name: "unknown format version",
            corrupt: |d| edit_manifest(d, |v| v["format_version"] = 99.into()),
            expected: |e| matches!(e, StoreError::UnsupportedVersion { found: 99, .. }),
        },
        MalformedCase {
            name: "truncated logits",
            corrupt: |d| {
                let p = d.join("logits.bin");
                let data = fs::read(&p).unwrap();
                fs::write(&p, &data[..data.len() - 4]).unwrap();
            },
            expected: |e| matches!(e, StoreError::ShapeMismatch { tensor, .. } if tensor == "logits"),
        },
        MalformedCase {
            name: "oversized embeddings",
            corrupt: |d| {
                let p = d.join("embeddings.bin");
                let mut data = fs::read(&p).unwrap();
                data.extend_from_slice(&[0; 4]);
                fs::write(&p, data).unwrap();
            },
            expected: |e| matches!(e, StoreError::ShapeMismatch { tensor, .. } if tensor == "embeddings"),
        },
        MalformedCase {
            name: "missing tensor file",
            corrupt: |d| fs::remove_file(d.join("labels.bin")).unwrap(),
            expected: |e| matches!(e, StoreError::MissingFile(p) if p.ends_with("labels.bin")),
        },
        MalformedCase {
            name: "missing descriptor",
            corrupt: |d| {
                let i = tensor_index(d, "labels");
                edit_manifest(d, |v| {
                    v["tensors"].as_array_mut().unwrap().remove(i);
                })
            },
            expected: |e| matches!(e, StoreError::MissingTensor(n) if n == "labels"),
        },
        MalformedCase {
            name: "declared shape disagrees with scalars",
            corrupt: |d| {
                let i = tensor_index(d, "logits");
                edit_manifest(d, |v| v["tensors"][i]["shape"] = serde_json::json!([3, 3, 2]))
            },
            expected: |e| matches!(e, StoreError::DeclaredShape { tensor, .. } if tensor == "logits"),
        },
        MalformedCase {
            name: "wrong dtype",
            corrupt: |d| {
                let i = tensor_index(d, "labels");
                edit_manifest(d, |v| v["tensors"][i]["dtype"] = "float32".into())
            },
            expected: |e| matches!(e, StoreError::DType { tensor, .. } if tensor == "labels"),
        },
        MalformedCase {
            name: "unexpected tensor",
            corrupt: |d| {
                edit_manifest(d, |v| {
                    v["tensors"].as_array_mut().unwrap().push(serde_json::json!({
                        "name": "extra", "dtype": "float32", "shape": [1], "file": "extra.bin"
                    }))
                })
            },
            expected: |e| matches!(e, StoreError::UnexpectedTensor(n) if n == "extra"),
        },
        MalformedCase {
            name: "path escapes directory",
            corrupt: |d| {
                let i = tensor_index(d, "logits");
                edit_manifest(d, |v| v["tensors"][i]["file"] = "../logits.bin".into())
            },
            expected: |e| matches!(e, StoreError::UnsafePath(_)),
        },
        MalformedCase {
            name: "NaN logit",
            corrupt: |d| patch_bytes(d, "logits.bin", 8, f32::NAN.to_le_bytes()),
            expected: |e| matches!(e, StoreError::Invalid(Core::NonFinite { field: "logits", index: 2 })),
        },
        MalformedCase {
            name: "infinite embedding",
            corrupt: |d| patch_bytes(d, "embeddings.bin", 4, f32::INFINITY.to_le_bytes()),
            expected: |e| matches!(e, StoreError::Invalid(Core::NonFinite { field: "embeddings", index: 1 })),
        },
        MalformedCase {
            name: "NaN last-layer weight",
            corrupt: |d| patch_bytes(d, "last_weight.bin", 0, f32::NAN.to_le_bytes()),
            expected: |e| matches!(e, StoreError::Invalid(Core::NonFinite { field: "last_weight", .. })),
        },
        MalformedCase {
            name: "label equal to class count",
            corrupt: |d| patch_bytes(d, "labels.bin", 4, 3i32.to_le_bytes()),
            expected: |e| {
                matches!(e, StoreError::Invalid(Core::LabelOutOfRange { index: 1, label: 3, n_classes: 3 }))
            },
        },
        MalformedCase {
            name: "negative label",
            corrupt: |d| patch_bytes(d, "labels.bin", 0, (-1i32).to_le_bytes()),
            expected: |e| matches!(e, StoreError::Invalid(Core::LabelOutOfRange { index: 0, label: -1, .. })),
        },
        MalformedCase {
            name: "unknown split",
            corrupt: |d| edit_manifest(d, |v| v["split"] = "holdout".into()),
            expected: |e| matches!(e, StoreError::Invalid(Core::UnknownSplit(s)) if s == "holdout"),
        },
        MalformedCase {
            name: "single class",
            corrupt: |d| edit_manifest(d, |v| v["n_classes"] = 1.into()),
            expected: |e| matches!(e, StoreError::Invalid(Core::InvalidField { field: "n_classes", .. })),
        },
    ]
}

/// Writes a fresh base artifact, applies `case`, and returns the read error.
pub fn run_malformed_case(case: &MalformedCase, root: &Path) -> Result<StoreError, String> {
    let dir = root.join(case.name.replace(' ', "_"));
    write_artifact(&base_artifact(), &dir).map_err(|e| e.to_string())?;
    (case.corrupt)(&dir);
    match faildetect::read_artifact(&dir) {
        Ok(_) => Err(format!("{}: read succeeded", case.name)),
        Err(e) if (case.expected)(&e) => Ok(e),
        Err(e) => Err(format!("{}: wrong error {e:?}", case.name)),
    }
}
