//! End-to-end benchmark: load, fit, score, evaluate, aggregate.

use std::collections::BTreeMap;
use std::path::Path;

use faildetect_core::confidnet::train_confidnet;
use faildetect_core::eval::{aggregate_seeds, evaluate, EvalReport, SeedAggregate};
use faildetect_core::laplace::{fit_laplace, select_prior_precision, LaplaceConfig};
use faildetect_core::metrics::{ensemble_combinations, select_threshold_at_fpr};
use faildetect_core::scores::{
    artifact_probs, fit_centroids, fit_trustscore, score_artifact, FittedModels, ScoredArtifact,
};
use faildetect_core::{PredictionArtifact, ScoreMethod};
use serde::{Deserialize, Serialize};

use crate::config::{BinaryThresholdPolicy, RunConfig, SeedArtifacts};
use crate::error::{Error, Result};
use crate::store::read_artifact;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub score_name: String,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub toolkit_version: String,
    pub seeds: Vec<u64>,
    pub scores: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub seed: u64,
    /// Binary decision threshold on the class-1 probability, when one applies.
    pub binary_threshold: Option<f64>,
    /// Prior precision used by the Laplace posterior, when fitted.
    pub laplace_prior_precision: Option<f64>,
    /// ConfidNet checkpoint epoch, when trained.
    pub confidnet_best_epoch: Option<usize>,
    /// Member indices of this seed's ensemble.
    pub ensemble_members: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub provenance: Provenance,
    pub seeds: Vec<SeedInfo>,
    pub reports: Vec<EvalReport>,
    pub skipped: Vec<SkipRecord>,
    pub aggregates: Vec<SeedAggregate>,
}

/// Scored test predictions of one (method, seed), kept for score CSVs.
pub struct ScoredRun {
    pub method: ScoreMethod,
    pub seed: u64,
    pub scored: ScoredArtifact,
    pub labels: Vec<usize>,
}

fn load(config: &RunConfig, path: &Path) -> Result<PredictionArtifact> {
    Ok(read_artifact(&config.resolve(path))?)
}

fn threshold_for(config: &RunConfig, val: Option<&PredictionArtifact>, n_classes: usize) -> Result<Option<f64>> {
    let needs_binary = |policy: &str| {
        Error::InvalidConfig(format!("{policy} threshold policy needs a binary task, found {n_classes} classes"))
    };
    match config.binary_threshold {
        BinaryThresholdPolicy::None => Ok(None),
        BinaryThresholdPolicy::Fixed { value } => {
            if n_classes != 2 {
                return Err(needs_binary("fixed"));
            }
            Ok(Some(value))
        }
        BinaryThresholdPolicy::FprTarget { target_fpr } => {
            if n_classes != 2 {
                return Err(needs_binary("fpr_target"));
            }
            let val = val.expect("validated: fpr_target requires val");
            let p1: Vec<f64> = artifact_probs(val)?.iter().map(|p| p[1]).collect();
            let is_one: Vec<bool> = (0..val.n_samples).map(|i| val.label(i) == 1).collect();
            Ok(Some(select_threshold_at_fpr(&p1, &is_one, target_fpr)?))
        }
    }
}

/// Lazily fitted models; a failed fit is remembered as the skip reason.
#[derive(Default)]
struct Fits {
    models: FittedModels,
    failures: BTreeMap<ScoreMethod, String>,
}

fn fit_models(
    config: &RunConfig,
    methods: &[ScoreMethod],
    train: &PredictionArtifact,
    val: Option<&PredictionArtifact>,
    threshold: Option<f64>,
    info: &mut SeedInfo,
) -> Fits {
    let mut fits = Fits::default();
    for &m in methods {
        let outcome: std::result::Result<(), String> = match m {
            ScoreMethod::TrustScore => fit_trustscore(train)
                .map(|t| fits.models.trust = Some(t))
                .map_err(|e| e.to_string()),
            ScoreMethod::CentroidRbf => fit_centroids(train)
                .map(|c| fits.models.centroid = Some(c))
                .map_err(|e| e.to_string()),
            ScoreMethod::Laplace => match train.last_layer() {
                None => Err("laplace needs last_weight in the train artifact".to_string()),
                Some(map) => map
                    .and_then(|map| match config.laplace.prior_precision {
                        Some(prior_precision) => fit_laplace(
                            train,
                            map,
                            LaplaceConfig {
                                prior_precision,
                                include_bias: config.laplace.include_bias,
                            },
                        ),
                        None => select_prior_precision(train, map, config.laplace.include_bias, &config.laplace.grid),
                    })
                    .map(|post| {
                        info.laplace_prior_precision = Some(post.prior_precision());
                        fits.models.laplace = Some(post);
                    })
                    .map_err(|e| e.to_string()),
            },
            ScoreMethod::ConfidNet => match val {
                None => Err("confidnet needs a validation split for checkpoint selection".to_string()),
                Some(val) => train_confidnet(train, val, &config.confidnet, threshold)
                    .map(|run| {
                        info.confidnet_best_epoch = Some(run.best_epoch);
                        fits.models.confidnet = Some(run.model);
                    })
                    .map_err(|e| e.to_string()),
            },
            _ => Ok(()),
        };
        if let Err(reason) = outcome {
            fits.failures.insert(m, reason);
        }
    }
    fits
}

fn run_seed(
    config: &RunConfig,
    index: usize,
    seed: &SeedArtifacts,
    methods: &[ScoreMethod],
    members: &[PredictionArtifact],
    result: &mut BenchmarkResult,
    scored_runs: &mut Vec<ScoredRun>,
) -> Result<()> {
    let train = load(config, &seed.train)?;
    let test = load(config, &seed.test)?;
    let val = seed.val.as_deref().map(|p| load(config, p)).transpose()?;
    let mc_test = seed.mc_test.as_deref().map(|p| load(config, p)).transpose()?;
    let threshold = threshold_for(config, val.as_ref(), test.n_classes)?;

    let mut info = SeedInfo {
        seed: seed.seed,
        binary_threshold: threshold,
        laplace_prior_precision: None,
        confidnet_best_epoch: None,
        ensemble_members: None,
    };
    let ensemble = match &config.ensemble {
        Some(e) if methods.contains(&ScoreMethod::EnsembleMsp) => {
            let combos = ensemble_combinations(members.len(), e.size)?;
            let combo = combos[index % combos.len()].clone();
            let picked: Vec<&PredictionArtifact> = combo.iter().map(|&m| &members[m]).collect();
            info.ensemble_members = Some(combo);
            Some(PredictionArtifact::stack_members(&picked).map_err(|e| e.to_string()))
        }
        _ => None,
    };
    let fits = fit_models(config, methods, &train, val.as_ref(), threshold, &mut info);
    let labels: Vec<usize> = (0..test.n_samples).map(|i| test.label(i)).collect();
    let eval_config = config.eval_config();

    for &m in methods {
        let skip = |reason: String| SkipRecord {
            score_name: m.as_str().to_string(),
            seed: seed.seed,
            reason,
        };
        if let Some(reason) = fits.failures.get(&m) {
            result.skipped.push(skip(reason.clone()));
            continue;
        }
        let artifact = match m {
            ScoreMethod::McMsp | ScoreMethod::McEntropy => match &mc_test {
                Some(a) => a,
                None => {
                    result.skipped.push(skip(format!("{m} needs an mc_test artifact")));
                    continue;
                }
            },
            ScoreMethod::EnsembleMsp => match &ensemble {
                Some(Ok(a)) => a,
                Some(Err(reason)) => {
                    result.skipped.push(skip(reason.clone()));
                    continue;
                }
                None => {
                    result.skipped.push(skip(format!("{m} needs ensemble members")));
                    continue;
                }
            },
            _ => &test,
        };
        if artifact.labels != test.labels {
            result
                .skipped
                .push(skip(format!("{m} artifact labels differ from the test split")));
            continue;
        }
        let outcome = score_artifact(artifact, m, &fits.models, threshold)
            .and_then(|scored| evaluate(m, seed.seed, &scored, &labels, &eval_config).map(|r| (scored, r)));
        match outcome {
            Ok((scored, report)) => {
                result.reports.push(report);
                scored_runs.push(ScoredRun {
                    method: m,
                    seed: seed.seed,
                    scored,
                    labels: labels.clone(),
                });
            }
            Err(e) => result.skipped.push(skip(e.to_string())),
        }
    }
    result.seeds.push(info);
    Ok(())
}

/// Runs every configured (score, seed) pair. Unmet requirements become skip
/// records; with `strict` any skip fails the run.
pub fn run_benchmark_with_scores(config: &RunConfig, strict: bool) -> Result<(BenchmarkResult, Vec<ScoredRun>)> {
    config.validate()?;
    let methods = config.methods();
    let members = match &config.ensemble {
        Some(e) if methods.contains(&ScoreMethod::EnsembleMsp) => {
            e.members.iter().map(|p| load(config, p)).collect::<Result<Vec<_>>>()?
        }
        _ => Vec::new(),
    };
    let mut result = BenchmarkResult {
        provenance: Provenance {
            config_sha256: config.hash(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            seeds: config.seeds.iter().map(|s| s.seed).collect(),
            scores: methods.iter().map(|m| m.as_str().to_string()).collect(),
        },
        seeds: Vec::new(),
        reports: Vec::new(),
        skipped: Vec::new(),
        aggregates: Vec::new(),
    };
    let mut scored_runs = Vec::new();
    for (index, seed) in config.seeds.iter().enumerate() {
        run_seed(config, index, seed, &methods, &members, &mut result, &mut scored_runs)?;
    }
    if strict && !result.skipped.is_empty() {
        return Err(Error::StrictSkips(result.skipped));
    }
    for m in &methods {
        let reports: Vec<EvalReport> = result
            .reports
            .iter()
            .filter(|r| r.score_name == m.as_str())
            .cloned()
            .collect();
        if !reports.is_empty() {
            result.aggregates.push(aggregate_seeds(&reports)?);
        }
    }
    Ok((result, scored_runs))
}

pub fn run_benchmark(config: &RunConfig, strict: bool) -> Result<BenchmarkResult> {
    run_benchmark_with_scores(config, strict).map(|(r, _)| r)
}
