//! JSON run configuration. Relative artifact paths resolve against the
//! directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use faildetect_core::confidnet::ConfidNetConfig;
use faildetect_core::eval::EvalConfig;
use faildetect_core::laplace::PRIOR_PRECISION_GRID;
use faildetect_core::ScoreMethod;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    pub test: PathBuf,
    /// Multi-pass (MC-dropout) predictions on the test split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_test: Option<PathBuf>,
}

/// Single-pass test artifacts of independently trained members; seed `k`
/// uses the `k`-th cyclic combination of `size` members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub members: Vec<PathBuf>,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BinaryThresholdPolicy {
    /// Argmax prediction.
    #[default]
    None,
    Fixed { value: f64 },
    /// Threshold on the class-1 probability chosen on the validation split.
    FprTarget { target_fpr: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaplaceOptions {
    /// Fixed prior precision; when absent it is chosen from `grid` by marginal likelihood.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_precision: Option<f64>,
    pub grid: Vec<f64>,
    pub include_bias: bool,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self {
            prior_precision: None,
            grid: PRIOR_PRECISION_GRID.to_vec(),
            include_bias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seeds: Vec<SeedArtifacts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    /// Absent means the default suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<ScoreMethod>>,
    pub binary_threshold: BinaryThresholdPolicy,
    pub target_tpr: f64,
    pub ece_bins: usize,
    pub laplace: LaplaceOptions,
    pub confidnet: ConfidNetConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let eval = EvalConfig::default();
        Self {
            seeds: Vec::new(),
            ensemble: None,
            scores: None,
            binary_threshold: BinaryThresholdPolicy::None,
            target_tpr: eval.target_tpr,
            ece_bins: eval.ece_bins,
            laplace: LaplaceOptions::default(),
            confidnet: ConfidNetConfig::default(),
            out: None,
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            target_tpr: self.target_tpr,
            ece_bins: self.ece_bins,
        }
    }

    /// The requested methods, or the default suite for this threshold policy.
    pub fn methods(&self) -> Vec<ScoreMethod> {
        match &self.scores {
            Some(s) => s.clone(),
            None => {
                let half = match self.binary_threshold {
                    BinaryThresholdPolicy::None => true,
                    BinaryThresholdPolicy::Fixed { value } => value == 0.5,
                    BinaryThresholdPolicy::FprTarget { .. } => false,
                };
                ScoreMethod::default_suite(half)
            }
        }
    }

    /// SHA-256 of the canonical JSON form, paths as written.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Checks everything that can be checked before any artifact is loaded.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidConfig(reason));
        if self.seeds.is_empty() {
            return fail("no seeds configured".into());
        }
        let mut ids: Vec<u64> = self.seeds.iter().map(|s| s.seed).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.seeds.len() {
            return fail("seed ids must be unique".into());
        }
        if let Some(s) = &self.scores {
            if s.is_empty() {
                return fail("score list is empty".into());
            }
        }
        if !(self.target_tpr > 0.0 && self.target_tpr <= 1.0) {
            return fail(format!("target_tpr {} outside (0, 1]", self.target_tpr));
        }
        if self.ece_bins == 0 {
            return fail("ece_bins must be positive".into());
        }
        match self.binary_threshold {
            BinaryThresholdPolicy::None => {}
            BinaryThresholdPolicy::Fixed { value } => {
                if !(0.0..=1.0).contains(&value) {
                    return fail(format!("fixed threshold {value} outside [0, 1]"));
                }
            }
            BinaryThresholdPolicy::FprTarget { target_fpr } => {
                if !(0.0..=1.0).contains(&target_fpr) {
                    return fail(format!("target_fpr {target_fpr} outside [0, 1]"));
                }
                if let Some(s) = self.seeds.iter().find(|s| s.val.is_none()) {
                    return fail(format!("seed {} has no validation split for the fpr_target policy", s.seed));
                }
            }
        }
        if let Some(p) = self.laplace.prior_precision {
            if !(p > 0.0 && p.is_finite()) {
                return fail(format!("laplace prior_precision {p} must be positive"));
            }
        } else if self.laplace.grid.is_empty() || self.laplace.grid.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return fail("laplace grid must be non-empty and positive".into());
        }
        if let Some(e) = &self.ensemble {
            if e.size == 0 || e.size > e.members.len() {
                return fail(format!("ensemble size {} with {} members", e.size, e.members.len()));
            }
        }
        let mut paths: Vec<&Path> = Vec::new();
        for s in &self.seeds {
            paths.extend([s.train.as_path(), s.test.as_path()]);
            paths.extend(s.val.as_deref());
            paths.extend(s.mc_test.as_deref());
        }
        if let Some(e) = &self.ensemble {
            paths.extend(e.members.iter().map(PathBuf::as_path));
        }
        if let Some(missing) = paths.into_iter().find(|p| !self.resolve(p).is_dir()) {
            return fail(format!("artifact directory {} does not exist", self.resolve(missing).display()));
        }
        Ok(())
    }
}
