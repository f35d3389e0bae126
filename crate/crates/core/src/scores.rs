//! Confidence-score identifiers, embedding-space score models and the
//! per-artifact scoring pipeline (aggregate passes, predict, score).

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::artifact::PredictionArtifact;
use crate::confidnet::ConfidNetModel;
use crate::error::{Error, Result};
use crate::laplace::LaplacePosterior;
use crate::probs::{
    aggregate_passes, doctor_score, msp_score, negative_entropy_score, PredictionRecord, ProbabilityVector,
};

/// TrustScore returned when the test point coincides with a point of the
/// predicted class but not with any other class.
pub const TRUST_SCORE_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScoreMethod {
    #[serde(rename = "msp")]
    Msp,
    #[serde(rename = "doctor")]
    Doctor,
    #[serde(rename = "neg-entropy")]
    NegEntropy,
    #[serde(rename = "mc-msp")]
    McMsp,
    #[serde(rename = "mc-entropy")]
    McEntropy,
    #[serde(rename = "ensemble-msp")]
    EnsembleMsp,
    #[serde(rename = "trustscore")]
    TrustScore,
    #[serde(rename = "centroid-rbf")]
    CentroidRbf,
    #[serde(rename = "laplace")]
    Laplace,
    #[serde(rename = "confidnet")]
    ConfidNet,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 10] = [
        ScoreMethod::Msp,
        ScoreMethod::Doctor,
        ScoreMethod::NegEntropy,
        ScoreMethod::McMsp,
        ScoreMethod::McEntropy,
        ScoreMethod::EnsembleMsp,
        ScoreMethod::TrustScore,
        ScoreMethod::CentroidRbf,
        ScoreMethod::Laplace,
        ScoreMethod::ConfidNet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMethod::Msp => "msp",
            ScoreMethod::Doctor => "doctor",
            ScoreMethod::NegEntropy => "neg-entropy",
            ScoreMethod::McMsp => "mc-msp",
            ScoreMethod::McEntropy => "mc-entropy",
            ScoreMethod::EnsembleMsp => "ensemble-msp",
            ScoreMethod::TrustScore => "trustscore",
            ScoreMethod::CentroidRbf => "centroid-rbf",
            ScoreMethod::Laplace => "laplace",
            ScoreMethod::ConfidNet => "confidnet",
        }
    }

    /// Scores that are probabilities of the predicted class and therefore
    /// have a calibration error.
    pub fn is_probability_valued(self) -> bool {
        matches!(
            self,
            ScoreMethod::Msp
                | ScoreMethod::McMsp
                | ScoreMethod::EnsembleMsp
                | ScoreMethod::Laplace
                | ScoreMethod::ConfidNet
        )
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(
            self,
            ScoreMethod::TrustScore | ScoreMethod::CentroidRbf | ScoreMethod::Laplace | ScoreMethod::ConfidNet
        )
    }

    pub fn needs_multiple_passes(self) -> bool {
        matches!(self, ScoreMethod::McMsp | ScoreMethod::McEntropy | ScoreMethod::EnsembleMsp)
    }

    pub fn is_entropy(self) -> bool {
        matches!(self, ScoreMethod::NegEntropy | ScoreMethod::McEntropy)
    }

    /// Every method, minus the entropy scores when a binary threshold other
    /// than 0.5 is in use.
    pub fn default_suite(binary_threshold_is_half: bool) -> Vec<ScoreMethod> {
        Self::ALL
            .iter()
            .copied()
            .filter(|m| binary_threshold_is_half || !m.is_entropy())
            .collect()
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownScore(s.to_string()))
    }
}

/// Per-sample confidences, higher = more confident.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub score_name: String,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Training embeddings grouped by true label for exact nearest-neighbour queries.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustModel {
    embed_dim: usize,
    /// Per class, row-major points.
    classes: Vec<Vec<f64>>,
}

impl TrustModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_points(&self) -> usize {
        self.classes.iter().map(|pts| pts.len() / self.embed_dim).sum()
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.classes[class].len() / self.embed_dim
    }
}

fn group_by_label(train: &PredictionArtifact, operation: &'static str) -> Result<Vec<Vec<f64>>> {
    if !train.has_embeddings() {
        return Err(Error::MissingEmbeddings { operation });
    }
    let mut classes = alloc::vec![Vec::new(); train.n_classes];
    for i in 0..train.n_samples {
        let e = train.embedding(i).expect("embeddings present");
        classes[train.label(i)].extend(e.iter().map(|&v| f64::from(v)));
    }
    if let Some(class) = classes.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass { class });
    }
    Ok(classes)
}

pub fn fit_trustscore(train: &PredictionArtifact) -> Result<TrustModel> {
    let classes = group_by_label(train, "fit_trustscore")?;
    Ok(TrustModel {
        embed_dim: train.embed_dim,
        classes,
    })
}

/// Squared distance to the nearest point in `points`, skipping candidates as
/// soon as their partial sum exceeds the best so far.
fn nearest_sq(points: &[f64], query: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for p in points.chunks_exact(query.len()) {
        let mut acc = 0.0;
        let mut pruned = false;
        for (a, b) in p.iter().zip(query) {
            let d = a - b;
            acc += d * d;
            if acc > best {
                pruned = true;
                break;
            }
        }
        if !pruned && acc < best {
            best = acc;
        }
    }
    best
}

/// Ratio of the distance to the nearest training point outside the predicted
/// class over the distance to the nearest point inside it.
pub fn trustscore(model: &TrustModel, embedding: &[f64], predicted_class: usize) -> Result<f64> {
    if embedding.len() != model.embed_dim {
        return Err(Error::LengthMismatch {
            left: embedding.len(),
            right: model.embed_dim,
        });
    }
    if predicted_class >= model.n_classes() {
        return Err(Error::InvalidParameter {
            name: "predicted_class",
            reason: alloc::format!("{predicted_class} >= {}", model.n_classes()),
        });
    }
    crate::artifact::check_finite("embedding", embedding.iter().copied())?;
    let mut pred_sq = f64::INFINITY;
    let mut other_sq = f64::INFINITY;
    for (c, points) in model.classes.iter().enumerate() {
        let d = nearest_sq(points, embedding);
        if c == predicted_class {
            pred_sq = d;
        } else if d < other_sq {
            other_sq = d;
        }
    }
    let d_pred = libm::sqrt(pred_sq);
    let d_other = libm::sqrt(other_sq);
    Ok(match (d_pred == 0.0, d_other == 0.0) {
        (true, true) => 1.0,
        (true, false) => TRUST_SCORE_CAP,
        _ => (d_other / d_pred).min(TRUST_SCORE_CAP),
    })
}

/// Post-hoc analogue of a distance-to-centroid score: per-class mean
/// embeddings with an RBF kernel. Not a trained DUQ model.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    pub centroids: Vec<Vec<f64>>,
    pub length_scale: f64,
}

pub fn fit_centroids(train: &PredictionArtifact) -> Result<CentroidModel> {
    let classes = group_by_label(train, "fit_centroids")?;
    let d = train.embed_dim;
    let centroids: Vec<Vec<f64>> = classes
        .iter()
        .map(|pts| {
            let n = (pts.len() / d) as f64;
            let mut mean = alloc::vec![0.0; d];
            for p in pts.chunks_exact(d) {
                for (m, v) in mean.iter_mut().zip(p) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            mean
        })
        .collect();
    let mut dists = Vec::new();
    for a in 0..centroids.len() {
        for b in a + 1..centroids.len() {
            dists.push(libm::sqrt(sq_dist(&centroids[a], &centroids[b])));
        }
    }
    let length_scale = crate::stats::median(&dists).ok_or(Error::EmptyInput)?;
    if !(length_scale > 0.0) {
        return Err(Error::InvalidParameter {
            name: "length_scale",
            reason: "median inter-centroid distance is zero".to_string(),
        });
    }
    Ok(CentroidModel {
        centroids,
        length_scale,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(−‖e − μ_ŷ‖² / (2σ²))`.
pub fn centroid_score(model: &CentroidModel, embedding: &[f64], predicted_class: usize) -> f64 {
    let sigma = model.length_scale;
    libm::exp(-sq_dist(embedding, &model.centroids[predicted_class]) / (2.0 * sigma * sigma))
}

/// Fitted post-hoc models available to [`score_artifact`].
#[derive(Debug, Clone, Default)]
pub struct FittedModels {
    pub trust: Option<TrustModel>,
    pub centroid: Option<CentroidModel>,
    pub laplace: Option<LaplacePosterior>,
    pub confidnet: Option<ConfidNetModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredArtifact {
    pub scores: ScoreVector,
    pub predicted: Vec<usize>,
    /// Class-1 probability under the method's predictive, binary tasks only.
    pub class1_probs: Option<Vec<f64>>,
}

fn unmet(method: ScoreMethod, needs: &str) -> Error {
    Error::UnmetRequirement {
        method: method.as_str(),
        needs: needs.to_string(),
    }
}

/// Checks the artifact and fitted models against what `method` needs.
pub fn check_requirements(artifact: &PredictionArtifact, method: ScoreMethod, models: &FittedModels) -> Result<()> {
    if method.needs_embeddings() && !artifact.has_embeddings() {
        return Err(unmet(method, "penultimate-layer embeddings (embed_dim > 0)"));
    }
    if method.needs_multiple_passes() && artifact.n_passes < 2 {
        return Err(unmet(method, "a multi-pass artifact (n_passes > 1)"));
    }
    let model_missing = match method {
        ScoreMethod::TrustScore => models.trust.is_none().then_some("a fitted TrustScore model"),
        ScoreMethod::CentroidRbf => models.centroid.is_none().then_some("fitted class centroids"),
        ScoreMethod::Laplace => models.laplace.is_none().then_some("a fitted last-layer Laplace posterior"),
        ScoreMethod::ConfidNet => models.confidnet.is_none().then_some("a trained ConfidNet"),
        _ => None,
    };
    if let Some(needs) = model_missing {
        return Err(unmet(method, needs));
    }
    Ok(())
}

/// Pass-averaged probabilities of every sample.
pub fn artifact_probs(artifact: &PredictionArtifact) -> Result<Vec<ProbabilityVector>> {
    (0..artifact.n_samples)
        .map(|i| {
            let row: Vec<f64> = artifact.sample_logits(i).iter().map(|&v| f64::from(v)).collect();
            aggregate_passes(&row, artifact.n_classes)
        })
        .collect()
}

/// Predictive probabilities the method bases its prediction on: the Laplace
/// predictive for `laplace`, the pass average otherwise.
pub fn method_probs(
    artifact: &PredictionArtifact,
    method: ScoreMethod,
    models: &FittedModels,
) -> Result<Vec<ProbabilityVector>> {
    check_requirements(artifact, method, models)?;
    match (method, &models.laplace) {
        (ScoreMethod::Laplace, Some(post)) => (0..artifact.n_samples)
            .map(|i| {
                let e = artifact.embedding_f64(i).expect("checked");
                post.predictive(&e)
            })
            .collect(),
        _ => artifact_probs(artifact),
    }
}

/// Scores every sample of `artifact` with `method`.
pub fn score_artifact(
    artifact: &PredictionArtifact,
    method: ScoreMethod,
    models: &FittedModels,
    binary_threshold: Option<f64>,
) -> Result<ScoredArtifact> {
    let probs = method_probs(artifact, method, models)?;
    if binary_threshold.is_some() && artifact.n_classes != 2 {
        return Err(Error::ThresholdRequiresBinary {
            n_classes: artifact.n_classes,
        });
    }
    let class1_probs = (artifact.n_classes == 2).then(|| probs.iter().map(|p| p[1]).collect());
    let mut scores = Vec::with_capacity(artifact.n_samples);
    let mut predicted = Vec::with_capacity(artifact.n_samples);
    for (i, p) in probs.into_iter().enumerate() {
        let record = PredictionRecord::new(p, binary_threshold)?;
        let score = match method {
            ScoreMethod::Msp | ScoreMethod::McMsp | ScoreMethod::EnsembleMsp | ScoreMethod::Laplace => {
                msp_score(&record)
            }
            ScoreMethod::Doctor => doctor_score(&record.probs)?,
            ScoreMethod::NegEntropy | ScoreMethod::McEntropy => negative_entropy_score(&record.probs),
            ScoreMethod::TrustScore => {
                let e = artifact.embedding_f64(i).expect("checked");
                trustscore(models.trust.as_ref().expect("checked"), &e, record.predicted_class)?
            }
            ScoreMethod::CentroidRbf => {
                let e = artifact.embedding_f64(i).expect("checked");
                centroid_score(models.centroid.as_ref().expect("checked"), &e, record.predicted_class)
            }
            ScoreMethod::ConfidNet => {
                let e = artifact.embedding_f64(i).expect("checked");
                models.confidnet.as_ref().expect("checked").score(&e)
            }
        };
        scores.push(score);
        predicted.push(record.predicted_class);
    }
    crate::artifact::check_finite("scores", scores.iter().copied())?;
    Ok(ScoredArtifact {
        scores: ScoreVector {
            score_name: method.as_str().to_string(),
            scores,
        },
        predicted,
        class1_probs,
    })
}
