//! Evaluation metrics over scored verdict pairs, plus embedding export for
//! external visualization.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive::{pair_score, ContrastiveError};
use crate::corpus::{truncate_tokens, LabeledSample, PairLabel, Repr, SamplePair, TOKEN_LIMIT};
use crate::encoder::EncoderModel;
use crate::repr::FittedFeaturizer;

/// An evaluation pair with its cosine similarity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: SamplePair,
    pub score: f64,
}

/// Metrics at a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Counts of evaluation pairs per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub positive: usize,
    pub negative: usize,
}

/// Metrics report file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub theta: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pairs: PairCounts,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need both classes for AUROC: {positive} positive / {negative} negative pairs")]
    SingleClass { positive: usize, negative: usize },
    #[error("no pairs to evaluate")]
    Empty,
    #[error("threshold must lie in [-1, 1], got {0}")]
    BadThreshold(f64),
    #[error("pair references unknown function_id {0:?}")]
    UnknownFunction(String),
    #[error("function {function_id:?} is missing representation {repr}")]
    MissingRepr { function_id: String, repr: Repr },
    #[error("function {function_id:?}: {source}")]
    Scoring {
        function_id: String,
        source: ContrastiveError,
    },
    #[error(transparent)]
    Contrastive(#[from] ContrastiveError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

/// AUROC via exact pair counting (the Mann-Whitney statistic): the fraction
/// of (positive, negative) pairs where the positive scores higher, ties
/// counted as 1/2.
pub fn auroc(scored: &[ScoredPair]) -> Result<f64, EvalError> {
    let positives: Vec<f64> = scored
        .iter()
        .filter(|s| s.pair.label == PairLabel::Same)
        .map(|s| s.score)
        .collect();
    let negatives: Vec<f64> = scored
        .iter()
        .filter(|s| s.pair.label == PairLabel::Different)
        .map(|s| s.score)
        .collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(EvalError::SingleClass {
            positive: positives.len(),
            negative: negatives.len(),
        });
    }
    let mut wins: u64 = 0;
    let mut ties: u64 = 0;
    for p in &positives {
        for n in &negatives {
            if p > n {
                wins += 1;
            } else if p == n {
                ties += 1;
            }
        }
    }
    let total = (positives.len() * negatives.len()) as f64;
    Ok((2 * wins + ties) as f64 / (2.0 * total))
}

/// Accuracy, precision, recall, and F1 at threshold `theta` (predict same
/// iff score > theta). Degenerate denominators yield 0 and a warning.
pub fn threshold_metrics(
    scored: &[ScoredPair],
    theta: f64,
) -> Result<(ThresholdMetrics, Vec<String>), EvalError> {
    if scored.is_empty() {
        return Err(EvalError::Empty);
    }
    if !(-1.0..=1.0).contains(&theta) {
        return Err(EvalError::BadThreshold(theta));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for s in scored {
        let predicted_same = s.score > theta;
        match (predicted_same, s.pair.label) {
            (true, PairLabel::Same) => tp += 1,
            (true, PairLabel::Different) => fp += 1,
            (false, PairLabel::Same) => fn_ += 1,
            (false, PairLabel::Different) => tn += 1,
        }
    }
    let mut warnings = Vec::new();
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        warnings.push("precision undefined (no positive predictions); reported as 0".to_string());
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        warnings.push("recall undefined (no positive pairs); reported as 0".to_string());
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((
        ThresholdMetrics {
            accuracy: (tp + tn) as f64 / scored.len() as f64,
            precision,
            recall,
            f1,
        },
        warnings,
    ))
}

/// Score sampled pairs with the model: each referenced function is embedded
/// once, pairs get the cosine similarity of their embeddings.
pub fn score_pairs(
    model: &EncoderModel,
    featurizer: &FittedFeaturizer,
    samples: &[LabeledSample],
    pairs: &[SamplePair],
    repr: Repr,
) -> Result<Vec<ScoredPair>, EvalError> {
    let by_id: HashMap<&str, &LabeledSample> = samples
        .iter()
        .map(|s| (s.sample.function_id.as_str(), s))
        .collect();
    let mut embeddings: HashMap<&str, Vec<f64>> = HashMap::new();
    for pair in pairs {
        for id in [pair.left.as_str(), pair.right.as_str()] {
            if embeddings.contains_key(id) {
                continue;
            }
            let labeled = *by_id
                .get(id)
                .ok_or_else(|| EvalError::UnknownFunction(id.to_string()))?;
            let embedding = embed_sample(model, featurizer, labeled, repr)?;
            embeddings.insert(labeled.sample.function_id.as_str(), embedding);
        }
    }
    let mut scored = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let score = crate::contrastive::cosine_similarity(
            &embeddings[pair.left.as_str()],
            &embeddings[pair.right.as_str()],
        )?;
        scored.push(ScoredPair {
            pair: pair.clone(),
            score,
        });
    }
    Ok(scored)
}

fn embed_sample(
    model: &EncoderModel,
    featurizer: &FittedFeaturizer,
    labeled: &LabeledSample,
    repr: Repr,
) -> Result<Vec<f64>, EvalError> {
    let text = labeled
        .sample
        .repr_text(repr)
        .ok_or_else(|| EvalError::MissingRepr {
            function_id: labeled.sample.function_id.clone(),
            repr,
        })?;
    let features = featurizer.featurize(&truncate_tokens(text, TOKEN_LIMIT));
    if features.l2_norm() == 0.0 {
        return Err(EvalError::Scoring {
            function_id: labeled.sample.function_id.clone(),
            source: ContrastiveError::ZeroNorm,
        });
    }
    model
        .forward(&features.values)
        .map_err(|e| EvalError::Scoring {
            function_id: labeled.sample.function_id.clone(),
            source: ContrastiveError::Encoder(e),
        })
}

/// One line of the embedding dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub function_id: String,
    pub owner: String,
    pub embedding: Vec<f64>,
}

/// Write one JSON line per sample: `{"function_id", "owner", "embedding"}`.
/// Deterministic: re-running with the same model produces identical bytes.
pub fn dump_embeddings(
    model: &EncoderModel,
    featurizer: &FittedFeaturizer,
    samples: &[LabeledSample],
    repr: Repr,
    path: &Path,
) -> Result<(), EvalError> {
    let mut out = String::new();
    for labeled in samples {
        let record = EmbeddingRecord {
            function_id: labeled.sample.function_id.clone(),
            owner: labeled.owner.clone(),
            embedding: embed_sample(model, featurizer, labeled, repr)?,
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    crate::write_atomic(path, out.as_bytes())?;
    Ok(())
}

/// Verify that a `pair_score` call agrees with scores recomputed from
/// dumped embeddings; used by round-trip tests.
pub fn pair_score_for_test(
    model: &EncoderModel,
    featurizer: &FittedFeaturizer,
    left: &str,
    right: &str,
) -> Result<f64, ContrastiveError> {
    pair_score(model, featurizer, left, right)
}
