//! Two models with identical rankings but different calibration.
//!
//! Each sample draws a success probability `x ~ U[0, 1]` and correctness
//! `~ Bernoulli(x)`. Model 1 reports `x` (perfectly calibrated), model 2
//! reports `0.9 + 0.1·x` (overconfident, same ranking). ECE separates them,
//! misclassification-detection ROC-AUC cannot.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{calibration_bins, roc_auc, CalibrationBins};

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySample {
    pub x: f64,
    pub correct: bool,
    pub conf1: f64,
    pub conf2: f64,
}

pub fn simulate_toy(n: usize, seed: u64) -> Result<Vec<ToySample>> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "need at least one sample".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let correct = rng.random::<f64>() < x;
            ToySample {
                x,
                correct,
                conf1: x,
                conf2: 0.9 + 0.1 * x,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub correct: usize,
    pub incorrect: usize,
}

/// Counts of correct and incorrect samples per fixed-width confidence bin on `[0, 1]`.
pub fn confidence_histogram(confidences: &[f64], correct: &[bool], width: f64) -> Vec<HistogramBin> {
    let n_bins = libm::round(1.0 / width) as usize;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|b| HistogramBin {
            lower: b as f64 * width,
            upper: (b + 1) as f64 * width,
            correct: 0,
            incorrect: 0,
        })
        .collect();
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = ((c / width) as usize).min(n_bins - 1);
        if ok {
            bins[b].correct += 1;
        } else {
            bins[b].incorrect += 1;
        }
    }
    bins
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub n: usize,
    pub seed: u64,
    pub n_bins: usize,
    pub accuracy: f64,
    pub ece_model1: f64,
    pub ece_model2: f64,
    pub roc_auc_model1: f64,
    pub roc_auc_model2: f64,
    pub calibration_model1: CalibrationBins,
    pub calibration_model2: CalibrationBins,
    pub histogram_model1: Vec<HistogramBin>,
    pub histogram_model2: Vec<HistogramBin>,
}

pub fn run_toy_experiment(n: usize, seed: u64, n_bins: usize) -> Result<ToyReport> {
    let samples = simulate_toy(n, seed)?;
    let correct: Vec<bool> = samples.iter().map(|s| s.correct).collect();
    let conf1: Vec<f64> = samples.iter().map(|s| s.conf1).collect();
    let conf2: Vec<f64> = samples.iter().map(|s| s.conf2).collect();
    let calibration_model1 = calibration_bins(&conf1, &correct, n_bins, "model1")?;
    let calibration_model2 = calibration_bins(&conf2, &correct, n_bins, "model2")?;
    Ok(ToyReport {
        n,
        seed,
        n_bins,
        accuracy: correct.iter().filter(|&&c| c).count() as f64 / n as f64,
        ece_model1: calibration_model1.ece(),
        ece_model2: calibration_model2.ece(),
        roc_auc_model1: roc_auc(&conf1, &correct)?,
        roc_auc_model2: roc_auc(&conf2, &correct)?,
        calibration_model1,
        calibration_model2,
        histogram_model1: confidence_histogram(&conf1, &correct, HISTOGRAM_BIN_WIDTH),
        histogram_model2: confidence_histogram(&conf2, &correct, HISTOGRAM_BIN_WIDTH),
    })
}
