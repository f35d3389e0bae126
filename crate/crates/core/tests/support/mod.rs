//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use faildetect_core::artifact::{LastLayerMap, PredictionArtifact, Split};
use faildetect_core::confidnet::ConfidNetModel;
use faildetect_core::laplace::LaplacePosterior;
use faildetect_core::probs::softmax_from_logits;
use faildetect_core::scores::TRUST_SCORE_CAP;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Mann-Whitney pair count with half credit for ties.
pub fn brute_auc(scores: &[f64], pos: &[bool]) -> f64 {
    let (mut gt, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if pos[i] && !pos[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    gt += 1;
                } else if scores[i] == scores[j] {
                    ties += 1;
                }
            }
        }
    }
    (gt as f64 + 0.5 * ties as f64) / pairs as f64
}

fn distinct_desc(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

fn admitted(scores: &[f64], pos: &[bool], t: f64, positive: bool) -> usize {
    (0..scores.len()).filter(|&i| pos[i] == positive && scores[i] >= t).count()
}

/// FPR at the first threshold, sweeping down, whose TPR reaches `target`.
pub fn brute_fpr(scores: &[f64], pos: &[bool], target: f64) -> f64 {
    let p = pos.iter().filter(|&&b| b).count();
    let n = pos.len() - p;
    for t in distinct_desc(scores) {
        if admitted(scores, pos, t, true) as f64 / p as f64 >= target {
            return admitted(scores, pos, t, false) as f64 / n as f64;
        }
    }
    unreachable!("the lowest threshold admits every positive")
}

/// Smallest observed score with FPR ≤ target, else just above the maximum.
pub fn brute_threshold(scores: &[f64], pos: &[bool], target: f64) -> f64 {
    let n = pos.iter().filter(|&&b| !b).count();
    distinct_desc(scores)
        .into_iter()
        .filter(|&t| admitted(scores, pos, t, false) as f64 / n as f64 <= target)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))))
        .unwrap_or_else(|| distinct_desc(scores)[0].next_up())
}

/// Step-wise area under the precision-recall curve.
pub fn brute_ap(scores: &[f64], pos: &[bool]) -> f64 {
    let p = pos.iter().filter(|&&b| b).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in distinct_desc(scores) {
        let tp = admitted(scores, pos, t, true) as f64;
        let k = tp + admitted(scores, pos, t, false) as f64;
        let recall = tp / p;
        ap += (recall - prev_recall) * (tp / k);
        prev_recall = recall;
    }
    ap
}

/// Scores on a coarse grid (frequent ties) with both classes present.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=max_n);
    let levels = rng.random_range(2..=40);
    let scores = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / 40.0).collect();
    let mut pos: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    pos[0] = true;
    pos[1] = false;
    (scores, pos)
}

/// Linear scan over every training point.
pub fn brute_trust(points: &[Vec<f64>], labels: &[usize], q: &[f64], pred: usize) -> f64 {
    let mut d_pred = f64::INFINITY;
    let mut d_other = f64::INFINITY;
    for (p, &l) in points.iter().zip(labels) {
        let d = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if l == pred {
            d_pred = d_pred.min(d);
        } else {
            d_other = d_other.min(d);
        }
    }
    if d_pred == 0.0 {
        return if d_other == 0.0 { 1.0 } else { TRUST_SCORE_CAP };
    }
    d_other / d_pred
}

pub struct LaplaceInstance {
    pub train: PredictionArtifact,
    pub map: LastLayerMap,
    pub emb: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Random embeddings, labels and a last layer with bias.
pub fn laplace_instance(n: usize, d: usize, c: usize, seed: u64) -> LaplaceInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f32> = (0..c * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let b: Vec<f32> = (0..c).map(|_| 0.5 * rng.sample::<f32, _>(StandardNormal)).collect();
    let emb32: Vec<f32> = (0..n * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let emb: Vec<Vec<f64>> = emb32.chunks(d).map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
    let map = LastLayerMap::new(
        w.iter().map(|&v| f64::from(v)).collect(),
        Some(b.iter().map(|&v| f64::from(v)).collect()),
        c,
        d,
    )
    .unwrap();
    let logits: Vec<f32> = emb.iter().flat_map(|e| map.logits(e)).map(|v| v as f32).collect();
    let train = PredictionArtifact::new(n, 1, c, logits, labels.iter().map(|&l| l as u32).collect(), Split::Train)
        .unwrap()
        .with_embeddings(d, emb32)
        .unwrap();
    LaplaceInstance { train, map, emb, labels }
}

/// Mean cross-entropy of `softmax(W e + b)` with W row-major `C × D`.
pub fn mean_ce(w: &[f64], b: &[f64], emb: &[Vec<f64>], labels: &[usize]) -> f64 {
    let c = b.len();
    let d = emb[0].len();
    let mut total = 0.0;
    for (e, &y) in emb.iter().zip(labels) {
        let z: Vec<f64> = (0..c).map(|r| b[r] + (0..d).map(|k| w[r * d + k] * e[k]).sum::<f64>()).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[y];
    }
    total / emb.len() as f64
}

/// Central second differences of `f` at `x`, row-major.
pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len();
    let mut h = vec![0.0; n * n];
    let mut y = x.to_vec();
    for i in 0..n {
        for j in 0..n {
            let mut eval = |si: f64, sj: f64| {
                y.copy_from_slice(x);
                y[i] += si * eps;
                y[j] += sj * eps;
                f(&y)
            };
            h[i * n + j] = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * eps * eps);
        }
    }
    h
}

/// Frobenius-norm relative error of `a` against `b`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm
}

/// Relative error of the posterior's `B` against the finite-difference loss
/// Hessian in the bias, which equals the averaged softmax Jacobian exactly.
pub fn output_factor_error(inst: &LaplaceInstance, post: &LaplacePosterior) -> f64 {
    let h = fd_hessian(|b| mean_ce(&inst.map.weights, b, &inst.emb, &inst.labels), &inst.map.bias, 1e-3);
    rel_err(&h, post.kron_b())
}

pub fn cholesky(m: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = m[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = if i == j { s.sqrt() } else { s / l[j * n + j] };
        }
    }
    l
}

/// Solves `L y = g` for lower-triangular `L`.
pub fn solve_lower(l: &[f64], g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (g[i] - s) / l[i * n + i];
    }
    y
}

/// Solves `Lᵀ x = z` for lower-triangular `L`.
pub fn solve_upper_transposed(l: &[f64], z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i * n + i];
    }
    x
}

/// Dense `N (B ⊗ A) + δ I` over row-major `vec(W)`.
pub fn dense_precision(post: &LaplacePosterior, c: usize, d: usize) -> Vec<f64> {
    let (a, b) = (post.kron_a(), post.kron_b());
    let n = post.n_train() as f64;
    let p = c * d;
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            let (r, k, s, l) = (i / d, i % d, j / d, j % d);
            out[i * p + j] = n * b[r * c + s] * a[k * d + l] + if i == j { post.prior_precision() } else { 0.0 };
        }
    }
    out
}

/// Mean softmax over `samples` weight draws from the Gaussian posterior.
pub fn mc_predictive(post: &LaplacePosterior, queries: &[Vec<f64>], samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let map = post.map();
    let (c, d) = (map.n_classes, map.embed_dim);
    let chol = cholesky(&dense_precision(post, c, d), c * d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mc = vec![vec![0.0; c]; queries.len()];
    let mut z = vec![0.0; c * d];
    for _ in 0..samples {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let dw = solve_upper_transposed(&chol, &z);
        for (q, acc) in queries.iter().zip(&mut mc) {
            let logits: Vec<f64> = (0..c)
                .map(|r| map.bias[r] + (0..d).map(|k| (map.weights[r * d + k] + dw[r * d + k]) * q[k]).sum::<f64>())
                .collect();
            for (m, v) in acc.iter_mut().zip(softmax_from_logits(&logits).unwrap().iter()) {
                *m += v / samples as f64;
            }
        }
    }
    mc
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Largest relative gap between analytic and central-difference gradients.
pub fn gradient_check(model: &ConfidNetModel, x: &[f64], t: &[f64], eps: f64) -> f64 {
    let (_, analytic) = model.mse_gradient(x, t);
    let params = model.flat_params();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut p = params.clone();
        p[i] += eps;
        probe.set_flat_params(&p);
        let up = probe.mse_loss(x, t);
        p[i] -= 2.0 * eps;
        probe.set_flat_params(&p);
        let down = probe.mse_loss(x, t);
        let fd = (up - down) / (2.0 * eps);
        worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-7));
    }
    worst
}

/// A small network with random nonzero biases, so no pre-activation sits
/// exactly on the ReLU kink, plus random inputs and targets.
pub fn gradient_check_case(seed: u64) -> (ConfidNetModel, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, h, n) = (3, 4, 8);
    let mut layers = ConfidNetModel::new(d, h, seed).unwrap().layers().to_vec();
    for l in &mut layers {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    let x = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let t = (0..n).map(|_| rng.random()).collect();
    (ConfidNetModel::from_layers(layers).unwrap(), x, t)
}

/// Population ECE of a model reporting `f(x)` when P(correct | x) = x,
/// x ~ U[0, 1], by midpoint quadrature per equal-width bin.
pub fn population_ece(f: impl Fn(f64) -> f64, n_bins: usize) -> f64 {
    let steps = 200_000;
    let mut gap = vec![0.0; n_bins];
    for i in 0..steps {
        let x = (i as f64 + 0.5) / steps as f64;
        let c = f(x);
        let b = ((c * n_bins as f64) as usize).min(n_bins - 1);
        gap[b] += c - x;
    }
    gap.iter().map(|g| g.abs() / steps as f64).sum()
}

/// P(x_i > x_j | i correct, j wrong) with densities 2a and 2(1 − b), by
/// midpoint quadrature over the triangle.
pub fn population_toy_auc() -> f64 {
    let steps = 2_000;
    let h = 1.0 / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        let a = (i as f64 + 0.5) * h;
        // inner integral of 2(1 − b) over b < a, in closed form
        total += 2.0 * a * (2.0 * a - a * a) * h;
    }
    total
}

/// Two-class data whose true-class probability depends on the embedding.
pub fn confidnet_dataset(n: usize, d: usize, seed: u64, split: Split) -> PredictionArtifact {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logits = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    let mut emb = Vec::with_capacity(n * d);
    for _ in 0..n {
        let e: Vec<f32> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let margin = 2.0 * e[0];
        logits.extend_from_slice(&[margin, -margin]);
        let p0 = 1.0 / (1.0 + (-2.0 * f64::from(margin)).exp());
        labels.push(u32::from(rng.random::<f64>() >= p0));
        emb.extend_from_slice(&e);
    }
    PredictionArtifact::new(n, 1, 2, logits, labels, split)
        .unwrap()
        .with_embeddings(d, emb)
        .unwrap()
}
