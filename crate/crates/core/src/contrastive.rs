//! Supervised contrastive loss over cosine similarities, its exact analytic
//! gradients through the encoder, and the pairwise same/different verdict.
//!
//! For a batch of embeddings e_i with author labels a_i and temperature τ,
//! the loss is
//!
//! ```text
//! L = -Σ_i log( Σ_{j≠i, a_j=a_i} exp(cos(e_i, e_j)/τ)
//!             / Σ_{k≠i}          exp(cos(e_i, e_k)/τ) )
//! ```
//!
//! Anchors with no in-batch positive are skipped (they contribute 0). Both
//! log-sum-exp terms are computed with max subtraction for stability, so the
//! per-anchor term is `lse_all - lse_pos >= 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{truncate_tokens, TOKEN_LIMIT};
use crate::encoder::{DenseLayer, EncoderModel};
use crate::repr::{FeatureVector, FittedFeaturizer};

#[derive(Debug, Error)]
pub enum ContrastiveError {
    #[error("vectors have mismatched dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("undefined similarity: zero-norm vector")]
    ZeroNorm,
    #[error("batch row {0} has a zero-norm embedding")]
    ZeroNormRow(usize),
    #[error("batch must contain at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("threshold must lie in [-1, 1], got {0}")]
    BadThreshold(f64),
    #[error("embedding matrix has {rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error(transparent)]
    Encoder(#[from] crate::encoder::EncoderError),
}

/// Batch of embeddings with per-row author labels.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self, ContrastiveError> {
        if rows.len() != labels.len() {
            return Err(ContrastiveError::LabelMismatch {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        Ok(EmbeddingMatrix { rows, labels })
    }
}

/// Cosine similarity clamped to [-1, 1]. Zero-norm input is an error.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, ContrastiveError> {
    if u.len() != v.len() {
        return Err(ContrastiveError::DimensionMismatch(u.len(), v.len()));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(ContrastiveError::ZeroNorm);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Pairwise cosine similarity matrix of unit-normalized rows, plus norms.
fn normalized_rows(e: &EmbeddingMatrix) -> Result<(Vec<Vec<f64>>, Vec<f64>), ContrastiveError> {
    let mut units = Vec::with_capacity(e.rows.len());
    let mut norms = Vec::with_capacity(e.rows.len());
    for (i, row) in e.rows.iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(ContrastiveError::ZeroNormRow(i));
        }
        units.push(row.iter().map(|v| v / norm).collect());
        norms.push(norm);
    }
    Ok((units, norms))
}

fn similarity_matrix(units: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = units.len();
    let mut sims = vec![vec![0.0; n]; n];
    for i in 0..n {
        sims[i][i] = 1.0;
        for j in i + 1..n {
            let s: f64 = units[i]
                .iter()
                .zip(&units[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .clamp(-1.0, 1.0);
            sims[i][j] = s;
            sims[j][i] = s;
        }
    }
    sims
}

/// Supervised contrastive loss of a labeled embedding batch.
pub fn supcon_loss(e: &EmbeddingMatrix, tau: f64) -> Result<f64, ContrastiveError> {
    if e.rows.len() != e.labels.len() {
        return Err(ContrastiveError::LabelMismatch {
            rows: e.rows.len(),
            labels: e.labels.len(),
        });
    }
    if e.rows.len() < 2 {
        return Err(ContrastiveError::BatchTooSmall(e.rows.len()));
    }
    if !(tau > 0.0) {
        return Err(ContrastiveError::BadTemperature(tau));
    }
    let (units, _) = normalized_rows(e)?;
    let sims = similarity_matrix(&units);
    Ok(loss_from_sims(&sims, &e.labels, tau).0)
}

/// Returns (loss, per-pair gradient dL/ds_ik for ordered pairs i != k).
fn loss_from_sims(sims: &[Vec<f64>], labels: &[String], tau: f64) -> (f64, Vec<Vec<f64>>) {
    let n = labels.len();
    let mut loss = 0.0;
    let mut grad = vec![vec![0.0; n]; n];
    for i in 0..n {
        let positives: Vec<usize> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        if positives.is_empty() {
            continue;
        }
        let scaled: Vec<f64> = (0..n)
            .map(|k| if k == i { f64::NEG_INFINITY } else { sims[i][k] / tau })
            .collect();
        let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_all: f64 = (0..n)
            .filter(|&k| k != i)
            .map(|k| (scaled[k] - m).exp())
            .sum();
        let sum_pos: f64 = positives.iter().map(|&j| (scaled[j] - m).exp()).sum();
        let lse_all = m + sum_all.ln();
        let lse_pos = m + sum_pos.ln();
        loss += (lse_all - lse_pos).max(0.0);

        // d(lse_all - lse_pos)/ds_ik = (p_all(k) - [k positive] p_pos(k)) / tau
        for k in 0..n {
            if k == i {
                continue;
            }
            let p_all = (scaled[k] - m).exp() / sum_all;
            let p_pos = if labels[k] == labels[i] {
                (scaled[k] - m).exp() / sum_pos
            } else {
                0.0
            };
            grad[i][k] = (p_all - p_pos) / tau;
        }
    }
    (loss, grad)
}

/// Per-layer gradients matching the model's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradientSet {
    fn zeros(model: &EncoderModel) -> GradientSet {
        GradientSet {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }
}

struct ForwardCache {
    /// Activations per layer boundary: [input, hidden_1, ..., output].
    activations: Vec<Vec<f64>>,
}

fn forward_cached(model: &EncoderModel, x: &[f64]) -> ForwardCache {
    let mut activations = Vec::with_capacity(model.layers.len() + 1);
    activations.push(x.to_vec());
    let last = model.layers.len() - 1;
    for (i, layer) in model.layers.iter().enumerate() {
        let prev = activations.last().expect("at least the input");
        let mut out = vec![0.0; layer.rows];
        apply_layer(layer, prev, &mut out);
        if i != last {
            out.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0;
                }
            });
        }
        activations.push(out);
    }
    ForwardCache { activations }
}

fn apply_layer(layer: &DenseLayer, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
        let mut acc = layer.bias[r];
        for (w, v) in row.iter().zip(x) {
            acc += w * v;
        }
        *o = acc;
    }
}

/// Loss and exact analytic gradients of `supcon_loss ∘ forward_batch` with
/// respect to every model parameter.
pub fn supcon_backward(
    model: &EncoderModel,
    batch: &[(FeatureVector, String)],
    tau: f64,
) -> Result<(f64, GradientSet), ContrastiveError> {
    if batch.len() < 2 {
        return Err(ContrastiveError::BatchTooSmall(batch.len()));
    }
    if !(tau > 0.0) {
        return Err(ContrastiveError::BadTemperature(tau));
    }

    let caches: Vec<ForwardCache> = batch
        .iter()
        .map(|(x, _)| {
            if x.values.len() != model.config.input_dim {
                Err(ContrastiveError::Encoder(
                    crate::encoder::EncoderError::DimensionMismatch {
                        expected: model.config.input_dim,
                        got: x.values.len(),
                    },
                ))
            } else {
                Ok(forward_cached(model, &x.values))
            }
        })
        .collect::<Result<_, _>>()?;

    let embeddings: Vec<&Vec<f64>> = caches
        .iter()
        .map(|c| c.activations.last().expect("output activation"))
        .collect();
    let labels: Vec<String> = batch.iter().map(|(_, l)| l.clone()).collect();

    let mut units = Vec::with_capacity(embeddings.len());
    let mut norms = Vec::with_capacity(embeddings.len());
    for (i, e) in embeddings.iter().enumerate() {
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(ContrastiveError::ZeroNormRow(i));
        }
        units.push(e.iter().map(|v| v / norm).collect::<Vec<f64>>());
        norms.push(norm);
    }
    let sims = similarity_matrix(&units);
    let (loss, pair_grad) = loss_from_sims(&sims, &labels, tau);

    // dL/du_i accumulates from anchor i's own pairs and from every pair in
    // which i is the candidate: s_ik = u_i . u_k is symmetric in its inputs.
    let n = batch.len();
    let dim = units[0].len();
    let mut du = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for k in 0..n {
            if k == i {
                continue;
            }
            let g = pair_grad[i][k];
            if g == 0.0 {
                continue;
            }
            for d in 0..dim {
                du[i][d] += g * units[k][d];
                du[k][d] += g * units[i][d];
            }
        }
    }

    // Through the normalization u = e / |e|: de = (du - (u . du) u) / |e|.
    let mut grads = GradientSet::zeros(model);
    for i in 0..n {
        let u_dot_du: f64 = units[i].iter().zip(&du[i]).map(|(a, b)| a * b).sum();
        let de: Vec<f64> = units[i]
            .iter()
            .zip(&du[i])
            .map(|(u, g)| (g - u_dot_du * u) / norms[i])
            .collect();
        backprop_row(model, &caches[i], de, &mut grads);
    }
    Ok((loss, grads))
}

/// Standard dense backprop for one row, accumulating into `grads`.
fn backprop_row(model: &EncoderModel, cache: &ForwardCache, d_out: Vec<f64>, grads: &mut GradientSet) {
    let mut delta = d_out;
    for (layer_idx, layer) in model.layers.iter().enumerate().rev() {
        let input = &cache.activations[layer_idx];
        let grad = &mut grads.layers[layer_idx];
        for r in 0..layer.rows {
            let g = delta[r];
            if g != 0.0 {
                let row = &mut grad.weights[r * layer.cols..(r + 1) * layer.cols];
                for (w, x) in row.iter_mut().zip(input) {
                    *w += g * x;
                }
            }
            grad.bias[r] += g;
        }
        if layer_idx == 0 {
            break;
        }
        // delta for the previous layer's output: W^T delta, masked by ReLU.
        let mut prev = vec![0.0; layer.cols];
        for r in 0..layer.rows {
            let g = delta[r];
            if g != 0.0 {
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += g * w;
                }
            }
        }
        // Hidden activations are ReLU outputs; zero activation means the
        // unit was clipped (or exactly zero), so no gradient flows.
        for (p, a) in prev.iter_mut().zip(&cache.activations[layer_idx]) {
            if *a <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
}

/// Pairwise verdict with its cosine score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Same,
    Different,
}

/// Decide whether two representation texts were written by the same author:
/// same iff the cosine similarity of their embeddings strictly exceeds
/// `theta`. Texts are token-truncated before featurization.
pub fn verdict(
    model: &EncoderModel,
    featurizer: &FittedFeaturizer,
    text_left: &str,
    text_right: &str,
    theta: f64,
) -> Result<Verdict, ContrastiveError> {
    if !(-1.0..=1.0).contains(&theta) {
        return Err(ContrastiveError::BadThreshold(theta));
    }
    let score = pair_score(model, featurizer, text_left, text_right)?;
    Ok(Verdict {
        decision: if score > theta {
            Decision::Same
        } else {
            Decision::Different
        },
        score,
    })
}

/// Cosine similarity of the embeddings of two texts.
pub fn pair_score(
    model: &EncoderModel,
    featurizer: &FittedFeaturizer,
    text_left: &str,
    text_right: &str,
) -> Result<f64, ContrastiveError> {
    let embed = |text: &str| -> Result<Vec<f64>, ContrastiveError> {
        let truncated = truncate_tokens(text, TOKEN_LIMIT);
        let features = featurizer.featurize(&truncated);
        if features.l2_norm() == 0.0 {
            return Err(ContrastiveError::ZeroNorm);
        }
        Ok(model.forward(&features.values)?)
    };
    cosine_similarity(&embed(text_left)?, &embed(text_right)?)
}
