//! In-memory prediction artifact: multi-pass logits, labels, optional
//! penultimate-layer embeddings and optional last-layer parameters.
//!
//! Multi-pass MC-dropout outputs and ensemble members share the pass axis.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }
}

/// MAP parameters of the final affine layer, `logits = weights · e + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LastLayerMap {
    /// Row-major `n_classes × embed_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub n_classes: usize,
    pub embed_dim: usize,
    pub source: String,
}

impl LastLayerMap {
    pub fn new(weights: Vec<f64>, bias: Option<Vec<f64>>, n_classes: usize, embed_dim: usize) -> Result<Self> {
        if weights.len() != n_classes * embed_dim {
            return Err(Error::ShapeMismatch {
                field: "last_weight",
                expected: n_classes * embed_dim,
                found: weights.len(),
            });
        }
        let source = if bias.is_some() { "exported" } else { "exported (zero bias)" };
        let bias = bias.unwrap_or_else(|| alloc::vec![0.0; n_classes]);
        if bias.len() != n_classes {
            return Err(Error::ShapeMismatch {
                field: "last_bias",
                expected: n_classes,
                found: bias.len(),
            });
        }
        check_finite("last_weight", weights.iter().copied())?;
        check_finite("last_bias", bias.iter().copied())?;
        Ok(Self {
            weights,
            bias,
            n_classes,
            embed_dim,
            source: source.to_string(),
        })
    }

    pub fn logits(&self, embedding: &[f64]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| {
                let row = &self.weights[c * self.embed_dim..(c + 1) * self.embed_dim];
                row.iter().zip(embedding).map(|(w, e)| w * e).sum::<f64>() + self.bias[c]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionArtifact {
    pub n_samples: usize,
    pub n_passes: usize,
    pub n_classes: usize,
    /// 0 means embeddings are absent.
    pub embed_dim: usize,
    /// Row-major `n_samples × n_passes × n_classes`.
    pub logits: Vec<f32>,
    pub labels: Vec<u32>,
    /// Row-major `n_samples × embed_dim`.
    pub embeddings: Vec<f32>,
    pub split: Split,
    pub meta: BTreeMap<String, String>,
    /// Row-major `n_classes × embed_dim`.
    pub last_weight: Option<Vec<f32>>,
    pub last_bias: Option<Vec<f32>>,
}

impl PredictionArtifact {
    /// Builds an artifact without embeddings or last-layer tensors and validates it.
    pub fn new(
        n_samples: usize,
        n_passes: usize,
        n_classes: usize,
        logits: Vec<f32>,
        labels: Vec<u32>,
        split: Split,
    ) -> Result<Self> {
        let artifact = Self {
            n_samples,
            n_passes,
            n_classes,
            embed_dim: 0,
            logits,
            labels,
            embeddings: Vec::new(),
            split,
            meta: BTreeMap::new(),
            last_weight: None,
            last_bias: None,
        };
        artifact.validate()?;
        Ok(artifact)
    }

    pub fn with_embeddings(mut self, embed_dim: usize, embeddings: Vec<f32>) -> Result<Self> {
        self.embed_dim = embed_dim;
        self.embeddings = embeddings;
        self.validate()?;
        Ok(self)
    }

    pub fn with_last_layer(mut self, weight: Vec<f32>, bias: Option<Vec<f32>>) -> Result<Self> {
        self.last_weight = Some(weight);
        self.last_bias = bias;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(invalid("n_samples", "must be positive"));
        }
        if self.n_passes == 0 {
            return Err(invalid("n_passes", "must be positive"));
        }
        if self.n_classes < 2 {
            return Err(invalid("n_classes", "must be at least 2"));
        }
        expect_len("logits", self.n_samples * self.n_passes * self.n_classes, self.logits.len())?;
        expect_len("labels", self.n_samples, self.labels.len())?;
        expect_len("embeddings", self.n_samples * self.embed_dim, self.embeddings.len())?;
        check_finite("logits", self.logits.iter().map(|&v| f64::from(v)))?;
        check_finite("embeddings", self.embeddings.iter().map(|&v| f64::from(v)))?;
        for (index, &label) in self.labels.iter().enumerate() {
            if label as usize >= self.n_classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label: i64::from(label),
                    n_classes: self.n_classes,
                });
            }
        }
        match (&self.last_weight, &self.last_bias) {
            (None, Some(_)) => return Err(invalid("last_bias", "present without last_weight")),
            (Some(w), bias) => {
                if self.embed_dim == 0 {
                    return Err(invalid("last_weight", "requires embeddings"));
                }
                expect_len("last_weight", self.n_classes * self.embed_dim, w.len())?;
                check_finite("last_weight", w.iter().map(|&v| f64::from(v)))?;
                if let Some(b) = bias {
                    expect_len("last_bias", self.n_classes, b.len())?;
                    check_finite("last_bias", b.iter().map(|&v| f64::from(v)))?;
                }
            }
            (None, None) => {}
        }
        Ok(())
    }

    pub fn has_embeddings(&self) -> bool {
        self.embed_dim > 0
    }

    /// Logits of sample `i`, `n_passes × n_classes` row-major.
    pub fn sample_logits(&self, i: usize) -> &[f32] {
        let stride = self.n_passes * self.n_classes;
        &self.logits[i * stride..(i + 1) * stride]
    }

    pub fn embedding(&self, i: usize) -> Option<&[f32]> {
        if self.embed_dim == 0 {
            return None;
        }
        Some(&self.embeddings[i * self.embed_dim..(i + 1) * self.embed_dim])
    }

    pub fn embedding_f64(&self, i: usize) -> Option<Vec<f64>> {
        self.embedding(i).map(|e| e.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn last_layer(&self) -> Option<Result<LastLayerMap>> {
        let w = self.last_weight.as_ref()?;
        let weights = w.iter().map(|&v| f64::from(v)).collect();
        let bias = self
            .last_bias
            .as_ref()
            .map(|b| b.iter().map(|&v| f64::from(v)).collect());
        Some(LastLayerMap::new(weights, bias, self.n_classes, self.embed_dim))
    }

    /// Stacks single-pass member artifacts along the pass axis, forming an
    /// ensemble artifact. Members must agree on labels and shapes; embeddings
    /// and last-layer tensors are taken from the first member.
    pub fn stack_members(members: &[&PredictionArtifact]) -> Result<Self> {
        let first = *members.first().ok_or(Error::EmptyInput)?;
        for m in members {
            if m.n_samples != first.n_samples || m.n_classes != first.n_classes {
                return Err(invalid("members", "sample or class counts differ"));
            }
            if m.labels != first.labels {
                return Err(invalid("members", "labels differ between members"));
            }
        }
        let n_passes: usize = members.iter().map(|m| m.n_passes).sum();
        let mut logits = Vec::with_capacity(first.n_samples * n_passes * first.n_classes);
        for i in 0..first.n_samples {
            for m in members {
                logits.extend_from_slice(m.sample_logits(i));
            }
        }
        let mut meta = first.meta.clone();
        meta.insert("ensemble_members".to_string(), format!("{}", members.len()));
        let out = Self {
            n_samples: first.n_samples,
            n_passes,
            n_classes: first.n_classes,
            embed_dim: first.embed_dim,
            logits,
            labels: first.labels.clone(),
            embeddings: first.embeddings.clone(),
            split: first.split,
            meta,
            last_weight: first.last_weight.clone(),
            last_bias: first.last_bias.clone(),
        };
        out.validate()?;
        Ok(out)
    }
}

fn invalid(field: &'static str, reason: &str) -> Error {
    Error::InvalidField {
        field,
        reason: reason.to_string(),
    }
}

fn expect_len(field: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { field, expected, found });
    }
    Ok(())
}

pub(crate) fn check_finite(field: &'static str, values: impl Iterator<Item = f64>) -> Result<()> {
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { field, index });
        }
    }
    Ok(())
}
