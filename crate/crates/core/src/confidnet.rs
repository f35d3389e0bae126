//! ConfidNet: a `[D, H, H, 1]` ReLU/sigmoid regressor trained with MSE to
//! predict the classifier's true-class probability from embeddings.
//!
//! Training is single-threaded with a fixed update order, so a fixed seed
//! yields bitwise-identical parameters.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::PredictionArtifact;
use crate::error::{Error, Result};
use crate::metrics::average_precision;
use crate::probs::{predict_class, softmax_unchecked};
use crate::scores::artifact_probs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfidNetConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a better validation checkpoint.
    pub patience: usize,
    pub seed: u64,
}

impl Default for ConfidNetConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            batch_size: 128,
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 15,
            seed: 0,
        }
    }
}

/// Row-major `out_dim × in_dim` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // He-uniform
        let bound = libm::sqrt(6.0 / in_dim as f64);
        let weights = (0..in_dim * out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias)) {
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidNetModel {
    layers: Vec<DenseLayer>,
}

/// Activations of one forward pass.
struct Trace {
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: f64,
}

impl ConfidNetModel {
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidParameter {
                name: "layer sizes",
                reason: "input and hidden widths must be positive".to_string(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            layers: vec![
                DenseLayer::init(input_dim, hidden, &mut rng),
                DenseLayer::init(hidden, hidden, &mut rng),
                DenseLayer::init(hidden, 1, &mut rng),
            ],
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let shape_ok = layers.len() == 3
            && layers[0].out_dim == layers[1].in_dim
            && layers[1].out_dim == layers[2].in_dim
            && layers[2].out_dim == 1
            && layers
                .iter()
                .all(|l| l.weights.len() == l.in_dim * l.out_dim && l.bias.len() == l.out_dim);
        if !shape_ok {
            return Err(Error::InvalidField {
                field: "confidnet layers",
                reason: "expected [D, H, H, 1] dense layers".to_string(),
            });
        }
        for l in &layers {
            crate::artifact::check_finite("confidnet parameters", l.weights.iter().chain(&l.bias).copied())?;
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Parameters flattened layer by layer, weights before bias.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut h1 = vec![0.0; self.layers[0].out_dim];
        self.layers[0].forward(x, &mut h1);
        relu(&mut h1);
        let mut h2 = vec![0.0; self.layers[1].out_dim];
        self.layers[1].forward(&h1, &mut h2);
        relu(&mut h2);
        let mut z = [0.0];
        self.layers[2].forward(&h2, &mut z);
        Trace {
            h1,
            h2,
            out: sigmoid(z[0]),
        }
    }

    /// Network output, kept strictly inside (0, 1).
    pub fn score(&self, embedding: &[f64]) -> f64 {
        self.trace(embedding)
            .out
            .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }

    /// Mean squared error over `inputs` (row-major, `input_dim` wide).
    pub fn mse_loss(&self, inputs: &[f64], targets: &[f64]) -> f64 {
        let d = self.input_dim();
        inputs
            .chunks_exact(d)
            .zip(targets)
            .map(|(x, t)| {
                let y = self.trace(x).out;
                (y - t) * (y - t)
            })
            .sum::<f64>()
            / targets.len() as f64
    }

    /// MSE and its gradient in [`Self::flat_params`] order.
    pub fn mse_gradient(&self, inputs: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let loss = self.accumulate_gradient(inputs, targets, &mut grad);
        (loss, grad)
    }

    fn accumulate_gradient(&self, inputs: &[f64], targets: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.input_dim();
        let [l1, l2, l3] = [&self.layers[0], &self.layers[1], &self.layers[2]];
        let (g1, rest) = grad.split_at_mut(l1.param_count());
        let (g2, g3) = rest.split_at_mut(l2.param_count());
        let (g1w, g1b) = g1.split_at_mut(l1.weights.len());
        let (g2w, g2b) = g2.split_at_mut(l2.weights.len());
        let (g3w, g3b) = g3.split_at_mut(l3.weights.len());
        let scale = 1.0 / targets.len() as f64;
        let mut loss = 0.0;
        let mut d2 = vec![0.0; l2.out_dim];
        let mut d1 = vec![0.0; l1.out_dim];
        for (x, &t) in inputs.chunks_exact(d).zip(targets) {
            let tr = self.trace(x);
            let err = tr.out - t;
            loss += err * err;
            // dL/dz of the output pre-activation
            let dz = 2.0 * err * scale * tr.out * (1.0 - tr.out);
            for (j, h) in tr.h2.iter().enumerate() {
                g3w[j] += dz * h;
            }
            g3b[0] += dz;
            for (j, dj) in d2.iter_mut().enumerate() {
                *dj = if tr.h2[j] > 0.0 { l3.weights[j] * dz } else { 0.0 };
            }
            for (j, dj) in d2.iter().enumerate() {
                if *dj == 0.0 {
                    continue;
                }
                let row = &mut g2w[j * l2.in_dim..(j + 1) * l2.in_dim];
                for (g, h) in row.iter_mut().zip(&tr.h1) {
                    *g += dj * h;
                }
                g2b[j] += dj;
            }
            d1.iter_mut().for_each(|v| *v = 0.0);
            for (dj, row) in d2.iter().zip(l2.weights.chunks_exact(l2.in_dim)) {
                if *dj != 0.0 {
                    for (dk, w) in d1.iter_mut().zip(row) {
                        *dk += dj * w;
                    }
                }
            }
            for (dk, h) in d1.iter_mut().zip(&tr.h1) {
                if *h <= 0.0 {
                    *dk = 0.0;
                }
            }
            for (k, dk) in d1.iter().enumerate() {
                if *dk == 0.0 {
                    continue;
                }
                let row = &mut g1w[k * d..(k + 1) * d];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dk * xi;
                }
                g1b[k] += dk;
            }
        }
        loss * scale
    }
}

/// True-class probability of every sample under the pass-averaged logits.
pub fn make_tcp_targets(artifact: &PredictionArtifact) -> Vec<f64> {
    let (t, c) = (artifact.n_passes, artifact.n_classes);
    (0..artifact.n_samples)
        .map(|i| {
            let mut mean = vec![0.0; c];
            for pass in artifact.sample_logits(i).chunks_exact(c) {
                for (m, &z) in mean.iter_mut().zip(pass) {
                    *m += f64::from(z);
                }
            }
            mean.iter_mut().for_each(|m| *m /= t as f64);
            softmax_unchecked(&mean)[artifact.label(i)]
        })
        .collect()
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(Self::BETA1, f64::from(self.step));
        let c2 = 1.0 - libm::pow(Self::BETA2, f64::from(self.step));
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= self.lr * (*m / c1) / (libm::sqrt(*v / c2) + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    /// Validation AUPR for error detection; `None` when the validation split
    /// has no errors or no correct predictions.
    pub val_aupr: Option<f64>,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedConfidNet {
    pub model: ConfidNetModel,
    /// 0 is the untrained initialization.
    pub best_epoch: usize,
    pub initial_train_mse: f64,
    pub history: Vec<EpochRecord>,
}

fn embeddings_of(artifact: &PredictionArtifact, operation: &'static str) -> Result<Vec<f64>> {
    if !artifact.has_embeddings() {
        return Err(Error::MissingEmbeddings { operation });
    }
    Ok(artifact.embeddings.iter().map(|&v| f64::from(v)).collect())
}

/// Validation quality of a checkpoint; larger is better.
fn checkpoint_quality(model: &ConfidNetModel, val_x: &[f64], misclassified: &[bool], val_t: &[f64]) -> (Option<f64>, f64) {
    let d = model.input_dim();
    let neg_out: Vec<f64> = val_x.chunks_exact(d).map(|x| -model.trace(x).out).collect();
    let aupr = average_precision(&neg_out, misclassified).ok();
    (aupr, model.mse_loss(val_x, val_t))
}

fn better(candidate: (Option<f64>, f64), best: (Option<f64>, f64)) -> bool {
    match (candidate.0, best.0) {
        (Some(a), Some(b)) => a > b,
        _ => candidate.1 < best.1,
    }
}

/// Trains on the train split and keeps the checkpoint with the best
/// validation AUPR for detecting misclassifications (falling back to
/// validation MSE when AUPR is undefined). Only checkpoints whose training
/// MSE does not exceed the initial one are eligible.
pub fn train_confidnet(
    train: &PredictionArtifact,
    val: &PredictionArtifact,
    config: &ConfidNetConfig,
    binary_threshold: Option<f64>,
) -> Result<TrainedConfidNet> {
    let train_x = embeddings_of(train, "train_confidnet")?;
    let val_x = embeddings_of(val, "train_confidnet")?;
    if train.embed_dim != val.embed_dim {
        return Err(Error::LengthMismatch {
            left: train.embed_dim,
            right: val.embed_dim,
        });
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidParameter {
            name: "confidnet config",
            reason: "batch_size and learning_rate must be positive".to_string(),
        });
    }
    let d = train.embed_dim;
    let train_t = make_tcp_targets(train);
    let val_t = make_tcp_targets(val);
    let misclassified: Vec<bool> = artifact_probs(val)?
        .iter()
        .enumerate()
        .map(|(i, p)| predict_class(p, binary_threshold).map(|c| c != val.label(i)))
        .collect::<Result<_>>()?;

    let mut model = ConfidNetModel::new(d, config.hidden, config.seed)?;
    let initial_train_mse = model.mse_loss(&train_x, &train_t);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_quality = checkpoint_quality(&model, &val_x, &misclassified, &val_t);
    let mut stale = 0;
    let mut history = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut params = model.flat_params();
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..train.n_samples).collect();
    let mut batch_x = Vec::with_capacity(config.batch_size * d);
    let mut batch_t = Vec::with_capacity(config.batch_size);
    let mut step = 0;

    for epoch in 1..=config.max_epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_t.clear();
            for &i in chunk {
                batch_x.extend_from_slice(&train_x[i * d..(i + 1) * d]);
                batch_t.push(train_t[i]);
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = model.accumulate_gradient(&batch_x, &batch_t, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { step });
            }
            adam.update(&mut params, &grad);
            model.set_flat_params(&params);
            step += 1;
        }
        let train_mse = model.mse_loss(&train_x, &train_t);
        if !train_mse.is_finite() {
            return Err(Error::Diverged { step });
        }
        let quality = checkpoint_quality(&model, &val_x, &misclassified, &val_t);
        history.push(EpochRecord {
            epoch,
            train_mse,
            val_aupr: quality.0,
            val_mse: quality.1,
        });
        if train_mse <= initial_train_mse && better(quality, best_quality) {
            best = model.clone();
            best_epoch = epoch;
            best_quality = quality;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(TrainedConfidNet {
        model: best,
        best_epoch,
        initial_train_mse,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::Split;

    #[test]
    fn tcp_target_examples() {
        let ln = |p: f64| libm::log(p) as f32;
        let art = PredictionArtifact::new(1, 1, 2, vec![ln(0.7), ln(0.3)], vec![1], Split::Train).unwrap();
        assert!((make_tcp_targets(&art)[0] - 0.3).abs() < 1e-7);
        let art = PredictionArtifact::new(1, 1, 3, vec![0.0, 800.0, 0.0], vec![1], Split::Train).unwrap();
        assert_eq!(make_tcp_targets(&art)[0], 1.0);
        let art = PredictionArtifact::new(1, 1, 4, vec![2.0; 4], vec![3], Split::Train).unwrap();
        assert_eq!(make_tcp_targets(&art)[0], 0.25);
    }

    #[test]
    fn output_is_open_unit_interval_and_deterministic() {
        let model = ConfidNetModel::new(3, 8, 5).unwrap();
        for e in [[0.0, 0.0, 0.0], [1e6, -1e6, 1e6], [-1e6, 1e6, -1e6], [0.3, 0.1, -2.0]] {
            let s = model.score(&e);
            assert!(s > 0.0 && s < 1.0, "{s}");
            assert_eq!(s, model.score(&e));
        }
    }

    #[test]
    fn flat_params_round_trip() {
        let mut model = ConfidNetModel::new(2, 3, 1).unwrap();
        let mut p = model.flat_params();
        assert_eq!(p.len(), 2 * 3 + 3 + 3 * 3 + 3 + 3 + 1);
        p[0] = 42.0;
        model.set_flat_params(&p);
        assert_eq!(model.layers()[0].weights[0], 42.0);
        assert_eq!(model.flat_params(), p);
    }

    #[test]
    fn from_layers_checks_shapes() {
        let model = ConfidNetModel::new(2, 3, 1).unwrap();
        let mut layers = model.layers().to_vec();
        assert_eq!(ConfidNetModel::from_layers(layers.clone()).unwrap(), model);
        layers.pop();
        assert!(ConfidNetModel::from_layers(layers).is_err());
    }

    #[test]
    fn missing_embeddings_named() {
        let bare = PredictionArtifact::new(2, 1, 2, vec![0.0; 4], vec![0, 1], Split::Train).unwrap();
        assert_eq!(
            train_confidnet(&bare, &bare, &ConfidNetConfig::default(), None).unwrap_err(),
            Error::MissingEmbeddings { operation: "train_confidnet" }
        );
    }
}
