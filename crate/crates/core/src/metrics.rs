//! Failure-detection and calibration metrics.
//!
//! Positives are correctly classified samples unless stated otherwise. All
//! threshold semantics admit a sample when `score ≥ threshold`, so tied
//! scores always move together. Degenerate inputs are errors, never NaN.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1` where the prediction equals the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessVector(Vec<bool>);

impl CorrectnessVector {
    pub fn from_bools(values: Vec<bool>) -> Self {
        Self(values)
    }

    pub fn accuracy(&self) -> f64 {
        self.0.iter().filter(|&&c| c).count() as f64 / self.0.len() as f64
    }
}

impl Deref for CorrectnessVector {
    type Target = [bool];

    fn deref(&self) -> &[bool] {
        &self.0
    }
}

pub fn correctness(predicted: &[usize], labels: &[usize]) -> Result<CorrectnessVector> {
    if predicted.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: labels.len(),
        });
    }
    Ok(CorrectnessVector(predicted.iter().zip(labels).map(|(p, l)| p == l).collect()))
}

fn check_pair(scores: &[f64], positives: &[bool]) -> Result<()> {
    if scores.len() != positives.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: positives.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    crate::artifact::check_finite("scores", scores.iter().copied())
}

fn class_counts(positives: &[bool]) -> Result<(usize, usize)> {
    let p = positives.iter().filter(|&&b| b).count();
    let n = positives.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::DegenerateClasses {
            positives: p,
            negatives: n,
        });
    }
    Ok((p, n))
}

/// Groups of tied scores in descending score order, as
/// `(score, positives_in_group, negatives_in_group)`.
fn descending_groups(scores: &[f64], positives: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for i in order {
        let s = scores[i];
        match groups.last_mut() {
            Some(g) if g.0 == s => {}
            _ => groups.push((s, 0, 0)),
        }
        let g = groups.last_mut().expect("just pushed");
        if positives[i] {
            g.1 += 1;
        } else {
            g.2 += 1;
        }
    }
    groups
}

/// Mann-Whitney ROC-AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. One sort, O(N log N).
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    check_pair(scores, positives)?;
    let (n_pos, n_neg) = class_counts(positives)?;
    // Twice the U statistic, kept integral.
    let mut twice_u: u64 = 0;
    let mut neg_below = n_neg as u64;
    for (_, p, q) in descending_groups(scores, positives) {
        let (p, q) = (p as u64, q as u64);
        neg_below -= q;
        twice_u += 2 * p * neg_below + p * q;
    }
    Ok(twice_u as f64 / (2 * n_pos as u64 * n_neg as u64) as f64)
}

/// FPR at the first threshold, sweeping from high to low, whose TPR reaches
/// `target_tpr`.
pub fn fpr_at_tpr(scores: &[f64], positives: &[bool], target_tpr: f64) -> Result<f64> {
    check_pair(scores, positives)?;
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "target_tpr",
            reason: alloc::format!("{target_tpr} is outside (0, 1]"),
        });
    }
    let (n_pos, n_neg) = class_counts(positives)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, p, q) in descending_groups(scores, positives) {
        tp += p;
        fp += q;
        if tp as f64 / n_pos as f64 >= target_tpr {
            return Ok(fp as f64 / n_neg as f64);
        }
    }
    unreachable!("the lowest threshold admits every positive")
}

/// Smallest observed score whose FPR (class-1 negatives admitted at
/// `score ≥ t`) stays within `target_fpr`. When even the top score is too
/// permissive, returns the next float above it, which admits nothing.
pub fn select_threshold_at_fpr(scores: &[f64], is_positive: &[bool], target_fpr: f64) -> Result<f64> {
    check_pair(scores, is_positive)?;
    if !(0.0..=1.0).contains(&target_fpr) {
        return Err(Error::InvalidParameter {
            name: "target_fpr",
            reason: alloc::format!("{target_fpr} is outside [0, 1]"),
        });
    }
    let (_, n_neg) = class_counts(is_positive)?;
    let groups = descending_groups(scores, is_positive);
    let mut fp = 0usize;
    let mut chosen = None;
    for (s, _, q) in &groups {
        fp += q;
        if fp as f64 / n_neg as f64 <= target_fpr {
            chosen = Some(*s);
        } else {
            break;
        }
    }
    Ok(chosen.unwrap_or_else(|| groups[0].0.next_up()))
}

/// Average precision: `Σ (R_k − R_{k−1}) P_k` over descending thresholds.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    check_pair(scores, positives)?;
    let (n_pos, _) = class_counts(positives)?;
    let (mut tp, mut admitted) = (0usize, 0usize);
    let mut ap = 0.0;
    for (_, p, q) in descending_groups(scores, positives) {
        tp += p;
        admitted += p + q;
        if p > 0 {
            ap += (p as f64 / n_pos as f64) * (tp as f64 / admitted as f64);
        }
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub coverage: f64,
    pub risk: f64,
}

/// One point per distinct score, accepting samples from the most confident
/// down. Risk is `1 − accuracy` of the accepted samples.
pub fn risk_coverage(scores: &[f64], positives: &[bool]) -> Result<Vec<RiskCoveragePoint>> {
    check_pair(scores, positives)?;
    let n = scores.len();
    let (mut correct, mut admitted) = (0usize, 0usize);
    Ok(descending_groups(scores, positives)
        .into_iter()
        .map(|(_, p, q)| {
            correct += p;
            admitted += p + q;
            RiskCoveragePoint {
                coverage: admitted as f64 / n as f64,
                risk: 1.0 - correct as f64 / admitted as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Zero for empty bins.
    pub mean_confidence: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBins {
    pub n: usize,
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationBins {
    pub fn ece(&self) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| b.count as f64 / self.n as f64 * (b.accuracy - b.mean_confidence).abs())
            .sum()
    }
}

/// Equal-width bins on `[0, 1]`; each bin is `[lo, hi)` except the last, which
/// also holds 1.0.
pub fn calibration_bins(
    confidences: &[f64],
    positives: &[bool],
    n_bins: usize,
    score_name: &str,
) -> Result<CalibrationBins> {
    check_pair(confidences, positives)?;
    if n_bins == 0 {
        return Err(Error::InvalidParameter {
            name: "n_bins",
            reason: "must be positive".to_string(),
        });
    }
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut correct = vec![0usize; n_bins];
    for (index, (&c, &ok)) in confidences.iter().zip(positives).enumerate() {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::ConfidenceOutOfRange {
                score: String::from(score_name),
                index,
                value: c,
            });
        }
        let b = ((c * n_bins as f64) as usize).min(n_bins - 1);
        count[b] += 1;
        conf_sum[b] += c;
        correct[b] += usize::from(ok);
    }
    let bins = (0..n_bins)
        .map(|b| {
            let (mean_confidence, accuracy) = if count[b] > 0 {
                (conf_sum[b] / count[b] as f64, correct[b] as f64 / count[b] as f64)
            } else {
                (0.0, 0.0)
            };
            CalibrationBin {
                lower: b as f64 / n_bins as f64,
                upper: (b + 1) as f64 / n_bins as f64,
                count: count[b],
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    Ok(CalibrationBins {
        n: confidences.len(),
        bins,
    })
}

/// Expected calibration error `Σ_m |B_m|/n · |Acc(B_m) − Conf(B_m)|`.
pub fn ece(confidences: &[f64], positives: &[bool], n_bins: usize, score_name: &str) -> Result<f64> {
    Ok(calibration_bins(confidences, positives, n_bins, score_name)?.ece())
}

/// Member index sets for ensembles of `size` out of `n_models`: the `n_models`
/// cyclic windows `{i, i+1, …, i+size−1} mod n_models`, or the single full set
/// when `size == n_models`.
pub fn ensemble_combinations(n_models: usize, size: usize) -> Result<Vec<Vec<usize>>> {
    if size == 0 || size > n_models {
        return Err(Error::InvalidParameter {
            name: "size",
            reason: alloc::format!("cannot pick {size} of {n_models} models"),
        });
    }
    if size == n_models {
        return Ok(vec![(0..n_models).collect()]);
    }
    Ok((0..n_models)
        .map(|i| (0..size).map(|k| (i + k) % n_models).collect())
        .collect())
}
