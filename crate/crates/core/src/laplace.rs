//! Last-layer Laplace approximation with a Kronecker-factored generalized
//! Gauss-Newton Hessian and a probit-approximated predictive.
//!
//! With `A = (1/N) Σ e eᵀ` (input factor, plus jitter) and
//! `B = (1/N) Σ (diag p̂ − p̂ p̂ᵀ)` (output factor), the posterior precision over
//! the row-major weights is `N (B ⊗ A) + δ I`. It is only ever handled through
//! the eigendecompositions of `A` and `B`: its eigenvalues are
//! `N b_j a_k + δ` with eigenvectors `u_j ⊗ v_k`.

use alloc::vec;
use alloc::vec::Vec;

use crate::artifact::{LastLayerMap, PredictionArtifact};
use crate::error::{Error, Result};
use crate::linalg::SymmetricEigen;
use crate::probs::{softmax_unchecked, ProbabilityVector};

/// Eigenvalues of a factor below this are a genuine PSD violation; smaller
/// negative values are rounding and get clamped to zero.
const PSD_TOLERANCE: f64 = -1e-8;
const JITTER_SCALE: f64 = 1e-6;

/// Prior precisions searched by [`select_prior_precision`].
pub const PRIOR_PRECISION_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceConfig {
    pub prior_precision: f64,
    /// Treat the bias as part of the Gaussian by appending a constant 1 to
    /// every embedding. Off by default: the bias stays at its MAP value.
    pub include_bias: bool,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            prior_precision: 1.0,
            include_bias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacePosterior {
    map: LastLayerMap,
    include_bias: bool,
    n_train: usize,
    prior_precision: f64,
    kron_a: Vec<f64>,
    kron_b: Vec<f64>,
    eig_a: SymmetricEigen,
    eig_b: SymmetricEigen,
}

fn input_features(embedding: &[f64], include_bias: bool) -> Vec<f64> {
    let mut x = embedding.to_vec();
    if include_bias {
        x.push(1.0);
    }
    x
}

fn decompose(matrix: &[f64], n: usize, factor: &'static str) -> Result<SymmetricEigen> {
    let mut eig = SymmetricEigen::new(matrix, n);
    let min_eigenvalue = eig.min_value();
    if !(min_eigenvalue >= PSD_TOLERANCE) {
        return Err(Error::NotPositiveSemidefinite { factor, min_eigenvalue });
    }
    for v in &mut eig.values {
        *v = v.max(0.0);
    }
    Ok(eig)
}

pub fn fit_laplace(train: &PredictionArtifact, map: LastLayerMap, config: LaplaceConfig) -> Result<LaplacePosterior> {
    if !train.has_embeddings() {
        return Err(Error::MissingEmbeddings { operation: "fit_laplace" });
    }
    if map.n_classes != train.n_classes || map.embed_dim != train.embed_dim {
        return Err(Error::ShapeMismatch {
            field: "last_weight",
            expected: train.n_classes * train.embed_dim,
            found: map.n_classes * map.embed_dim,
        });
    }
    if !(config.prior_precision > 0.0) || !config.prior_precision.is_finite() {
        return Err(Error::InvalidParameter {
            name: "prior_precision",
            reason: alloc::format!("{} is not a positive finite number", config.prior_precision),
        });
    }
    let c = map.n_classes;
    let da = map.embed_dim + usize::from(config.include_bias);
    let n = train.n_samples;
    let mut kron_a = vec![0.0; da * da];
    let mut kron_b = vec![0.0; c * c];
    for i in 0..n {
        let e = train.embedding_f64(i).expect("embeddings present");
        let p = softmax_unchecked(&map.logits(&e));
        let x = input_features(&e, config.include_bias);
        for r in 0..da {
            for s in 0..da {
                kron_a[r * da + s] += x[r] * x[s];
            }
        }
        for r in 0..c {
            for s in 0..c {
                let diag = if r == s { p[r] } else { 0.0 };
                kron_b[r * c + s] += diag - p[r] * p[s];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    kron_a.iter_mut().for_each(|v| *v *= inv_n);
    kron_b.iter_mut().for_each(|v| *v *= inv_n);
    let trace: f64 = (0..da).map(|r| kron_a[r * da + r]).sum();
    let jitter = JITTER_SCALE * trace / da as f64;
    for r in 0..da {
        kron_a[r * da + r] += jitter;
    }
    let eig_a = decompose(&kron_a, da, "A")?;
    let eig_b = decompose(&kron_b, c, "B")?;
    Ok(LaplacePosterior {
        map,
        include_bias: config.include_bias,
        n_train: n,
        prior_precision: config.prior_precision,
        kron_a,
        kron_b,
        eig_a,
        eig_b,
    })
}

impl LaplacePosterior {
    pub fn map(&self) -> &LastLayerMap {
        &self.map
    }

    pub fn prior_precision(&self) -> f64 {
        self.prior_precision
    }

    pub fn include_bias(&self) -> bool {
        self.include_bias
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// Input factor, row-major, jitter included.
    pub fn kron_a(&self) -> &[f64] {
        &self.kron_a
    }

    /// Output factor, row-major `C × C`.
    pub fn kron_b(&self) -> &[f64] {
        &self.kron_b
    }

    /// Same posterior with a different prior precision; the factors are reused.
    pub fn with_prior_precision(&self, prior_precision: f64) -> Result<Self> {
        if !(prior_precision > 0.0) || !prior_precision.is_finite() {
            return Err(Error::InvalidParameter {
                name: "prior_precision",
                reason: alloc::format!("{prior_precision} is not a positive finite number"),
            });
        }
        let mut out = self.clone();
        out.prior_precision = prior_precision;
        Ok(out)
    }

    /// Eigenvalues of the posterior precision, ordered `(j, k)` with `j`
    /// indexing `B` and `k` indexing `A`.
    pub fn precision_eigenvalues(&self) -> Vec<f64> {
        let n = self.n_train as f64;
        let mut out = Vec::with_capacity(self.eig_b.n * self.eig_a.n);
        for &b in &self.eig_b.values {
            for &a in &self.eig_a.values {
                out.push(n * b * a + self.prior_precision);
            }
        }
        out
    }

    /// Per `B`-eigenvector weights `s_j = Σ_k z_k² / (N b_j a_k + δ)`, `z = V_Aᵀ x`.
    fn direction_weights(&self, embedding: &[f64]) -> Vec<f64> {
        let x = input_features(embedding, self.include_bias);
        let z = self.eig_a.project(&x);
        let n = self.n_train as f64;
        self.eig_b
            .values
            .iter()
            .map(|&b| {
                z.iter()
                    .zip(&self.eig_a.values)
                    .map(|(zk, &a)| zk * zk / (n * b * a + self.prior_precision))
                    .sum()
            })
            .collect()
    }

    /// Covariance of the latent logits `f = W e + b`, row-major `C × C`.
    pub fn latent_covariance(&self, embedding: &[f64]) -> Vec<f64> {
        let c = self.map.n_classes;
        let s = self.direction_weights(embedding);
        let mut cov = vec![0.0; c * c];
        for (j, sj) in s.iter().enumerate() {
            let u: Vec<f64> = self.eig_b.vector(j).collect();
            for r in 0..c {
                for t in 0..c {
                    cov[r * c + t] += sj * u[r] * u[t];
                }
            }
        }
        cov
    }

    /// Diagonal of [`Self::latent_covariance`].
    pub fn latent_variance(&self, embedding: &[f64]) -> Vec<f64> {
        let c = self.map.n_classes;
        let s = self.direction_weights(embedding);
        (0..c)
            .map(|r| {
                s.iter()
                    .enumerate()
                    .map(|(j, sj)| {
                        let u = self.eig_b.vectors[r * c + j];
                        sj * u * u
                    })
                    .sum()
            })
            .collect()
    }

    /// Probit-scaling factors `1 / √(1 + π σ²_c / 8)`.
    pub fn probit_scaling(&self, embedding: &[f64]) -> Vec<f64> {
        self.latent_variance(embedding)
            .into_iter()
            .map(|v| 1.0 / libm::sqrt(1.0 + core::f64::consts::PI / 8.0 * v))
            .collect()
    }

    /// `softmax(f_c / √(1 + π σ²_c / 8))`.
    pub fn predictive(&self, embedding: &[f64]) -> Result<ProbabilityVector> {
        if embedding.len() != self.map.embed_dim {
            return Err(Error::LengthMismatch {
                left: embedding.len(),
                right: self.map.embed_dim,
            });
        }
        let f = self.map.logits(embedding);
        let scaled: Vec<f64> = f
            .iter()
            .zip(self.probit_scaling(embedding))
            .map(|(fc, k)| fc * k)
            .collect();
        crate::probs::softmax_from_logits(&scaled)
    }

    /// Laplace estimate of the log marginal likelihood of the training data,
    /// up to terms that do not depend on the prior precision.
    pub fn log_marginal_likelihood(&self, train: &PredictionArtifact) -> f64 {
        let mut log_lik = 0.0;
        for i in 0..train.n_samples {
            let e = train.embedding_f64(i).expect("embeddings present");
            let p = softmax_unchecked(&self.map.logits(&e));
            log_lik += libm::log(p[train.label(i)].max(f64::MIN_POSITIVE));
        }
        let mut theta_sq: f64 = self.map.weights.iter().map(|w| w * w).sum();
        if self.include_bias {
            theta_sq += self.map.bias.iter().map(|b| b * b).sum::<f64>();
        }
        let eig = self.precision_eigenvalues();
        let n_params = eig.len() as f64;
        let log_det: f64 = eig.iter().map(|&l| libm::log(l)).sum();
        let delta = self.prior_precision;
        log_lik - 0.5 * delta * theta_sq + 0.5 * n_params * libm::log(delta) - 0.5 * log_det
    }
}

/// Fits once and keeps the prior precision from `grid` with the largest
/// Laplace marginal likelihood on the training data.
pub fn select_prior_precision(
    train: &PredictionArtifact,
    map: LastLayerMap,
    include_bias: bool,
    grid: &[f64],
) -> Result<LaplacePosterior> {
    let first = *grid.first().ok_or(Error::EmptyInput)?;
    let base = fit_laplace(
        train,
        map,
        LaplaceConfig {
            prior_precision: first,
            include_bias,
        },
    )?;
    let mut best: Option<(f64, LaplacePosterior)> = None;
    for &delta in grid {
        let post = base.with_prior_precision(delta)?;
        let lml = post.log_marginal_likelihood(train);
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            best = Some((lml, post));
        }
    }
    Ok(best.expect("grid is non-empty").1)
}
