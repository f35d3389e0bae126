//! Desk-scale stand-in for a trained classifier: Gaussian class clusters in
//! embedding space read out by a noisy linear layer.
//!
//! One dataset is drawn per generator seed. Each benchmark seed and each
//! ensemble member gets its own perturbed readout, the way repeated training
//! runs differ on a fixed dataset. MC passes apply inverted dropout to the
//! embedding before the readout.

use std::fs;
use std::path::{Path, PathBuf};

use faildetect_core::{PredictionArtifact, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{BinaryThresholdPolicy, EnsembleConfig, RunConfig, SeedArtifacts};
use crate::error::{Error, Result};
use crate::store::write_artifact;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub embed_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Euclidean distance between any two class means; embeddings have unit variance.
    pub separation: f64,
    /// Standard deviation of the per-seed perturbation of the readout weights.
    pub weight_noise: f64,
    /// Standard deviation of additive logit noise.
    pub logit_noise: f64,
    pub mc_passes: usize,
    pub dropout: f64,
    pub ensemble_members: usize,
    pub ensemble_size: usize,
    pub n_seeds: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_classes: 3,
            embed_dim: 8,
            n_train: 2000,
            n_val: 2000,
            n_test: 2000,
            separation: 2.7,
            weight_noise: 0.1,
            logit_noise: 0.25,
            mc_passes: 10,
            dropout: 0.1,
            ensemble_members: 5,
            ensemble_size: 3,
            n_seeds: 5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Err(Error::InvalidSynthetic(reason.to_string()));
        if self.n_classes < 2 {
            return fail("n_classes must be at least 2");
        }
        if self.embed_dim < self.n_classes {
            return fail("embed_dim must be at least n_classes");
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return fail("every split needs at least one sample");
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return fail("separation must be a finite non-negative number");
        }
        if !(self.weight_noise >= 0.0) || !(self.logit_noise >= 0.0) {
            return fail("noise levels must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.mc_passes < 2 {
            return fail("mc_passes must be at least 2");
        }
        if self.n_seeds == 0 {
            return fail("n_seeds must be positive");
        }
        if self.ensemble_size > self.ensemble_members {
            return fail("ensemble_size exceeds ensemble_members");
        }
        Ok(())
    }
}

/// Embeddings and labels of one split.
struct SplitData {
    pub embeddings: Vec<f32>,
    pub labels: Vec<u32>,
}

/// Bayes-optimal readout for unit-variance clusters: `w_c = μ_c`, `b_c = −‖μ_c‖²/2`.
struct Readout {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Class means on scaled basis vectors, so every pair sits `separation` apart.
fn class_means(config: &SyntheticConfig) -> Vec<Vec<f64>> {
    let scale = config.separation / std::f64::consts::SQRT_2;
    (0..config.n_classes)
        .map(|c| {
            let mut m = vec![0.0; config.embed_dim];
            m[c] = scale;
            m
        })
        .collect()
}

fn draw_split(means: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> SplitData {
    let c = means.len();
    let d = means[0].len();
    let mut embeddings = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random_range(0..c);
        for mean in &means[y] {
            let z: f64 = rng.sample(StandardNormal);
            embeddings.push((mean + z) as f32);
        }
        labels.push(y as u32);
    }
    SplitData { embeddings, labels }
}

fn perturbed_readout(means: &[Vec<f64>], sd: f64, rng: &mut ChaCha8Rng) -> Readout {
    let noise = Normal::new(0.0, sd).expect("validated non-negative");
    let weights = means
        .iter()
        .flat_map(|m| m.iter().map(|&v| v + noise.sample(rng)).collect::<Vec<_>>())
        .collect();
    let bias = means.iter().map(|m| -0.5 * m.iter().map(|v| v * v).sum::<f64>()).collect();
    Readout { weights, bias }
}

/// `passes` logit rows per sample; each pass draws a fresh dropout mask when
/// `dropout` is set. Logit noise is drawn once per sample.
fn logits(
    data: &SplitData,
    readout: &Readout,
    passes: usize,
    dropout: Option<f64>,
    logit_noise: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let c = readout.bias.len();
    let d = readout.weights.len() / c;
    let n = data.labels.len();
    let noise = Normal::new(0.0, logit_noise).expect("validated non-negative");
    let mut out = Vec::with_capacity(n * passes * c);
    let mut x = vec![0.0; d];
    for e in data.embeddings.chunks_exact(d) {
        let base_noise: Vec<f64> = (0..c).map(|_| noise.sample(rng)).collect();
        for _ in 0..passes {
            for (xi, &ei) in x.iter_mut().zip(e) {
                *xi = match dropout {
                    Some(p) if rng.random::<f64>() < p => 0.0,
                    Some(p) => f64::from(ei) / (1.0 - p),
                    None => f64::from(ei),
                };
            }
            for (k, row) in readout.weights.chunks_exact(d).enumerate() {
                let z = row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + readout.bias[k] + base_noise[k];
                out.push(z as f32);
            }
        }
    }
    out
}

fn artifact(
    data: &SplitData,
    readout: &Readout,
    passes: usize,
    logits: Vec<f32>,
    split: Split,
    model: &str,
) -> Result<PredictionArtifact> {
    let c = readout.bias.len();
    let d = readout.weights.len() / c;
    let mut a = PredictionArtifact::new(data.labels.len(), passes, c, logits, data.labels.clone(), split)?
        .with_embeddings(d, data.embeddings.clone())?
        .with_last_layer(
            readout.weights.iter().map(|&v| v as f32).collect(),
            Some(readout.bias.iter().map(|&v| v as f32).collect()),
        )?;
    a.meta.insert("dataset".into(), "synthetic-gaussian".into());
    a.meta.insert("model".into(), model.into());
    Ok(a)
}

/// Accuracy of the pass-averaged prediction of `readout` on `data`, without logit noise.
#[cfg(test)]
fn readout_accuracy(data: &SplitData, readout: &Readout) -> f64 {
    let c = readout.bias.len();
    let d = readout.weights.len() / c;
    let correct = data
        .embeddings
        .chunks_exact(d)
        .zip(&data.labels)
        .filter(|(e, &y)| {
            let scores: Vec<f64> = readout
                .weights
                .chunks_exact(d)
                .zip(&readout.bias)
                .map(|(w, b)| w.iter().zip(e.iter()).map(|(w, &v)| w * f64::from(v)).sum::<f64>() + b)
                .collect();
            let best = (0..c).fold(0, |best, k| if scores[k] > scores[best] { k } else { best });
            best == y as usize
        })
        .count();
    correct as f64 / data.labels.len() as f64
}

fn rel(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base).unwrap_or(path).to_path_buf()
}

/// Writes every artifact under `out` plus `run_config.json` referencing them.
pub fn generate_synthetic(config: &SyntheticConfig, out: &Path) -> Result<RunConfig> {
    config.validate()?;
    let means = class_means(config);
    let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = draw_split(&means, config.n_train, &mut data_rng);
    let val = draw_split(&means, config.n_val, &mut data_rng);
    let test = draw_split(&means, config.n_test, &mut data_rng);

    let mut members = Vec::new();
    for m in 0..config.ensemble_members {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6d65_6d62_0000_0000 ^ m as u64);
        let readout = perturbed_readout(&means, config.weight_noise, &mut rng);
        let dir = out.join("members").join(format!("member{m}"));
        let l = logits(&test, &readout, 1, None, config.logit_noise, &mut rng);
        write_artifact(&artifact(&test, &readout, 1, l, Split::Test, &format!("member{m}"))?, &dir)?;
        members.push(rel(&dir, out));
    }

    let mut seeds = Vec::new();
    for s in 0..config.n_seeds as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(1_000_003).wrapping_add(s + 1));
        let readout = perturbed_readout(&means, config.weight_noise, &mut rng);
        let model = format!("seed{s}");
        let dir = out.join(&model);
        let mut write = |name: &str, data: &SplitData, split, passes, dropout: Option<f64>| -> Result<PathBuf> {
            let l = logits(data, &readout, passes, dropout, config.logit_noise, &mut rng);
            let path = dir.join(name);
            write_artifact(&artifact(data, &readout, passes, l, split, &model)?, &path)?;
            Ok(rel(&path, out))
        };
        let train_dir = write("train", &train, Split::Train, 1, None)?;
        let val_dir = write("val", &val, Split::Val, 1, None)?;
        let test_dir = write("test", &test, Split::Test, 1, None)?;
        let mc_dir = write("mc_test", &test, Split::Test, config.mc_passes, Some(config.dropout))?;
        seeds.push(SeedArtifacts {
            seed: s,
            train: train_dir,
            val: Some(val_dir),
            test: test_dir,
            mc_test: Some(mc_dir),
        });
    }

    let run = RunConfig {
        seeds,
        ensemble: (config.ensemble_members > 0 && config.ensemble_size > 0).then_some(EnsembleConfig {
            members,
            size: config.ensemble_size,
        }),
        binary_threshold: if config.n_classes == 2 {
            BinaryThresholdPolicy::FprTarget { target_fpr: 0.2 }
        } else {
            BinaryThresholdPolicy::None
        },
        ..RunConfig::default()
    };
    fs::create_dir_all(out).map_err(|source| Error::io(out, source))?;
    run.save(&out.join("run_config.json"))?;
    Ok(run)
}
