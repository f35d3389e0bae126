//! Softmax outputs, pass aggregation and the output-only confidence scores.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::artifact::check_finite;
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-6;

/// Softmax output over `C` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        check_finite("probabilities", values.iter().copied())?;
        if values.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidField {
                field: "probabilities",
                reason: "entries must lie in [0, 1]".to_string(),
            });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidField {
                field: "probabilities",
                reason: alloc::format!("entries sum to {sum}"),
            });
        }
        Ok(Self(values))
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest probability; the first one wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = c;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbabilityVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A prediction with its probabilities. `predicted_class` is the argmax unless
/// a binary decision threshold moved it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub predicted_class: usize,
    pub probs: ProbabilityVector,
}

impl PredictionRecord {
    pub fn new(probs: ProbabilityVector, binary_threshold: Option<f64>) -> Result<Self> {
        let predicted_class = predict_class(&probs, binary_threshold)?;
        Ok(Self { predicted_class, probs })
    }
}

/// Max-subtracted softmax.
pub fn softmax_from_logits(logits: &[f64]) -> Result<ProbabilityVector> {
    if logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite("logits", logits.iter().copied())?;
    Ok(ProbabilityVector(softmax_unchecked(logits)))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Mean of the per-pass softmax vectors of a `T × C` row-major tensor.
pub fn aggregate_passes(logits: &[f64], n_classes: usize) -> Result<ProbabilityVector> {
    if n_classes == 0 {
        return Err(Error::EmptyInput);
    }
    if !logits.len().is_multiple_of(n_classes) {
        return Err(Error::ShapeMismatch {
            field: "logits",
            expected: (logits.len() / n_classes + 1) * n_classes,
            found: logits.len(),
        });
    }
    let n_passes = logits.len() / n_classes;
    if n_passes == 0 {
        return Err(Error::NoPasses);
    }
    check_finite("logits", logits.iter().copied())?;
    let mut mean = alloc::vec![0.0; n_classes];
    for pass in logits.chunks_exact(n_classes) {
        for (m, p) in mean.iter_mut().zip(softmax_unchecked(pass)) {
            *m += p;
        }
    }
    for m in &mut mean {
        *m /= n_passes as f64;
    }
    Ok(ProbabilityVector(mean))
}

/// Argmax for multiclass; with a threshold `τ` on a binary task, class 1 iff `p̂₁ ≥ τ`.
pub fn predict_class(probs: &ProbabilityVector, binary_threshold: Option<f64>) -> Result<usize> {
    match binary_threshold {
        None => Ok(probs.argmax()),
        Some(_) if probs.n_classes() != 2 => Err(Error::ThresholdRequiresBinary {
            n_classes: probs.n_classes(),
        }),
        Some(tau) => Ok(usize::from(probs[1] >= tau)),
    }
}

/// Softmax probability of the predicted class.
pub fn msp_score(record: &PredictionRecord) -> f64 {
    record.probs[record.predicted_class]
}

/// Negated DOCTOR `D_α = (1 − g)/g` with `g = Σ p̂_c²`.
pub fn doctor_score(probs: &ProbabilityVector) -> Result<f64> {
    let g: f64 = probs.iter().map(|p| p * p).sum();
    if g <= 0.0 {
        return Err(Error::ZeroCollisionProbability);
    }
    Ok(-(1.0 - g) / g)
}

/// `Σ p̂_c ln p̂_c` with `0 · ln 0 = 0`.
pub fn negative_entropy_score(probs: &ProbabilityVector) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * libm::log(p))
        .sum()
}
