//! Per-(score, seed) evaluation reports and their aggregation over seeds.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{correctness, ece, fpr_at_tpr, risk_coverage, roc_auc, RiskCoveragePoint};
use crate::scores::{ScoreMethod, ScoredArtifact};
use crate::stats::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub target_tpr: f64,
    pub ece_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            target_tpr: 0.8,
            ece_bins: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub score_name: String,
    pub seed: u64,
    pub n_samples: usize,
    pub accuracy: f64,
    /// ROC-AUC of the score for separating correct (positive) from wrong predictions.
    pub roc_auc_error_detection: f64,
    pub target_tpr: f64,
    pub fpr_at_tpr: f64,
    /// Only for probability-valued scores.
    pub ece: Option<f64>,
    /// ROC-AUC of the class-1 probability against the labels, binary tasks only.
    pub binary_roc_auc: Option<f64>,
    pub risk_coverage: Vec<RiskCoveragePoint>,
}

impl EvalReport {
    /// Scalar metrics by name, in a fixed order.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = alloc::vec![
            ("accuracy", self.accuracy),
            ("roc_auc_error_detection", self.roc_auc_error_detection),
            ("fpr_at_tpr", self.fpr_at_tpr),
        ];
        if let Some(e) = self.ece {
            out.push(("ece", e));
        }
        if let Some(a) = self.binary_roc_auc {
            out.push(("binary_roc_auc", a));
        }
        out
    }
}

pub fn evaluate(
    method: ScoreMethod,
    seed: u64,
    scored: &ScoredArtifact,
    labels: &[usize],
    config: &EvalConfig,
) -> Result<EvalReport> {
    let correct = correctness(&scored.predicted, labels)?;
    let scores = &scored.scores.scores;
    let ece = if method.is_probability_valued() {
        Some(ece(scores, &correct, config.ece_bins, method.as_str())?)
    } else {
        None
    };
    let binary_roc_auc = match &scored.class1_probs {
        Some(p1) => {
            let is_one: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            Some(roc_auc(p1, &is_one)?)
        }
        None => None,
    };
    Ok(EvalReport {
        score_name: method.as_str().to_string(),
        seed,
        n_samples: scores.len(),
        accuracy: correct.accuracy(),
        roc_auc_error_detection: roc_auc(scores, &correct)?,
        target_tpr: config.target_tpr,
        fpr_at_tpr: fpr_at_tpr(scores, &correct, config.target_tpr)?,
        ece,
        binary_roc_auc,
        risk_coverage: risk_coverage(scores, &correct)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub score_name: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, Summary>,
}

/// Summaries of every scalar metric over the reports of one score.
pub fn aggregate_seeds(reports: &[EvalReport]) -> Result<SeedAggregate> {
    let first = reports.first().ok_or(Error::EmptyInput)?;
    if reports.iter().any(|r| r.score_name != first.score_name) {
        return Err(Error::InvalidField {
            field: "reports",
            reason: "reports of different scores cannot be aggregated".to_string(),
        });
    }
    let mut values: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (name, v) in r.metrics() {
            values.entry(name).or_default().push(v);
        }
    }
    let metrics = values
        .into_iter()
        .filter_map(|(name, vals)| Summary::from_values(&vals).map(|s| (name.to_string(), s)))
        .collect();
    Ok(SeedAggregate {
        score_name: first.score_name.clone(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        metrics,
    })
}
