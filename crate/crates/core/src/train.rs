//! Contrastive training loop: sample P authors x K functions per batch,
//! backpropagate the supervised contrastive loss, apply one Adam step.
//! Fully deterministic for a fixed seed.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive::{supcon_backward, ContrastiveError, GradientSet};
use crate::corpus::{truncate_tokens, LabeledSample, Repr, TOKEN_LIMIT};
use crate::encoder::EncoderModel;
use crate::repr::{FeatureVector, FittedFeaturizer};

/// Optimizer choice. Adam is the only one implemented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Softmax temperature of the contrastive loss.
    pub temperature: f64,
    /// Authors sampled per batch (P).
    pub batch_authors: usize,
    /// Functions sampled per author per batch (K).
    pub samples_per_author: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            temperature: 0.1,
            batch_authors: 8,
            samples_per_author: 4,
            epochs: 10,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            seed: 0,
        }
    }
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.epochs {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    BadConfig(&'static str),
    #[error(
        "insufficient training data: need {required_authors} authors with at least \
         {required_samples} samples each, found {available}"
    )]
    InsufficientAuthors {
        required_authors: usize,
        required_samples: usize,
        available: usize,
    },
    #[error("function {function_id:?} is missing representation {repr}")]
    MissingRepr { function_id: String, repr: Repr },
    #[error(transparent)]
    Contrastive(#[from] ContrastiveError),
}

/// Train the encoder on labeled samples using representation `repr`.
/// Returns the trained model and the per-epoch log. With `epochs == 0` the
/// model is returned unchanged.
pub fn train(
    model: EncoderModel,
    samples: &[LabeledSample],
    repr: Repr,
    featurizer: &FittedFeaturizer,
    cfg: &TrainConfig,
) -> Result<(EncoderModel, TrainingLog), TrainError> {
    if !(cfg.temperature > 0.0) {
        return Err(TrainError::BadConfig("temperature must be positive"));
    }
    if cfg.batch_authors < 2 {
        return Err(TrainError::BadConfig("batch_authors must be at least 2"));
    }
    if cfg.samples_per_author < 2 {
        return Err(TrainError::BadConfig("samples_per_author must be at least 2"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(TrainError::BadConfig("learning_rate must be positive"));
    }

    // Featurize once up front; batches reference these vectors.
    let mut by_author: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut vectors: Vec<FeatureVector> = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let text = s
            .sample
            .repr_text(repr)
            .ok_or_else(|| TrainError::MissingRepr {
                function_id: s.sample.function_id.clone(),
                repr,
            })?;
        vectors.push(featurizer.featurize(&truncate_tokens(text, TOKEN_LIMIT)));
        by_author.entry(s.owner.as_str()).or_default().push(i);
    }

    let eligible: Vec<(&str, &Vec<usize>)> = by_author
        .iter()
        .filter(|(_, idxs)| idxs.len() >= cfg.samples_per_author)
        .map(|(a, idxs)| (*a, idxs))
        .collect();
    if eligible.len() < cfg.batch_authors {
        return Err(TrainError::InsufficientAuthors {
            required_authors: cfg.batch_authors,
            required_samples: cfg.samples_per_author,
            available: eligible.len(),
        });
    }

    let usable: usize = eligible.iter().map(|(_, idxs)| idxs.len()).sum();
    let batch_size = cfg.batch_authors * cfg.samples_per_author;
    let batches_per_epoch = (usable / batch_size).max(1);

    let mut model = model;
    let mut log = TrainingLog::default();
    if cfg.epochs == 0 {
        return Ok((model, log));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model, cfg.optimizer, cfg.learning_rate);

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for _ in 0..batches_per_epoch {
            let batch = sample_batch(&eligible, &vectors, samples, cfg, &mut rng);
            let (loss, grads) = supcon_backward(&model, &batch, cfg.temperature)?;
            loss_sum += loss;
            adam.step(&mut model, &grads);
        }
        log.epochs.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / batches_per_epoch as f64,
            batches: batches_per_epoch,
        });
    }
    Ok((model, log))
}

fn sample_batch(
    eligible: &[(&str, &Vec<usize>)],
    vectors: &[FeatureVector],
    samples: &[LabeledSample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<(FeatureVector, String)> {
    let author_picks = index::sample(rng, eligible.len(), cfg.batch_authors);
    let mut batch = Vec::with_capacity(cfg.batch_authors * cfg.samples_per_author);
    for a in author_picks.iter() {
        let (_, idxs) = eligible[a];
        let picks = index::sample(rng, idxs.len(), cfg.samples_per_author);
        for p in picks.iter() {
            let sample_idx = idxs[p];
            batch.push((
                vectors[sample_idx].clone(),
                samples[sample_idx].owner.clone(),
            ));
        }
    }
    batch
}

/// Adam moment buffers, one pair per parameter.
struct AdamState {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    learning_rate: f64,
    step: u64,
    m: Vec<LayerMoments>,
}

struct LayerMoments {
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

impl AdamState {
    fn new(model: &EncoderModel, optimizer: Optimizer, learning_rate: f64) -> AdamState {
        let Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } = optimizer;
        AdamState {
            beta1,
            beta2,
            epsilon,
            learning_rate,
            step: 0,
            m: model
                .layers
                .iter()
                .map(|l| LayerMoments {
                    m_w: vec![0.0; l.weights.len()],
                    v_w: vec![0.0; l.weights.len()],
                    m_b: vec![0.0; l.bias.len()],
                    v_b: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn step(&mut self, model: &mut EncoderModel, grads: &GradientSet) {
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        for (layer, (moments, grad)) in model
            .layers
            .iter_mut()
            .zip(self.m.iter_mut().zip(&grads.layers))
        {
            update_params(
                &mut layer.weights,
                &grad.weights,
                &mut moments.m_w,
                &mut moments.v_w,
                self.beta1,
                self.beta2,
                self.epsilon,
                self.learning_rate,
                correction1,
                correction2,
            );
            update_params(
                &mut layer.bias,
                &grad.bias,
                &mut moments.m_b,
                &mut moments.v_b,
                self.beta1,
                self.beta2,
                self.epsilon,
                self.learning_rate,
                correction1,
                correction2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_params(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    learning_rate: f64,
    correction1: f64,
    correction2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / correction1;
        let v_hat = v[i] / correction2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AuthorShare, FunctionSample};
    use crate::encoder::EncoderConfig;
    use crate::repr::{FeaturizerKind, FittedFeaturizer};
    use std::collections::BTreeMap;

    fn mini_corpus() -> Vec<LabeledSample> {
        // Four authors with strongly distinct token habits, five samples each.
        let styles: [(&str, &[&str]); 4] = [
            ("alice", &["AAA BBB", "AAB ABA", "ABB BAA", "AAA ABB", "BAB AAA"]),
            ("bob", &["CCC DDD", "CCD DCC", "CDD DCD", "CCC DDC", "DDD CCC"]),
            ("carol", &["EEE FFF", "EEF FEE", "EFF FEF", "EEE FFE", "FFF EEE"]),
            ("dave", &["GGG HHH", "GGH HGG", "GHH HGH", "GGG HHG", "HHH GGG"]),
        ];
        let mut out = Vec::new();
        for (author, texts) in styles {
            for (i, text) in texts.iter().enumerate() {
                out.push(LabeledSample {
                    sample: FunctionSample {
                        function_id: format!("{author}_{i}"),
                        project: "p".into(),
                        binary_id: format!("bin{}", i % 2),
                        function_name: format!("{author}_{i}"),
                        authors: vec![AuthorShare {
                            name: author.into(),
                            share: 1.0,
                        }],
                        reprs: BTreeMap::from([(Repr::Asm, text.to_string())]),
                    },
                    owner: author.into(),
                });
            }
        }
        out
    }

    fn fitted(samples: &[LabeledSample]) -> FittedFeaturizer {
        let docs: Vec<String> = samples
            .iter()
            .map(|s| s.sample.repr_text(Repr::Asm).unwrap().to_string())
            .collect();
        FittedFeaturizer::fit(FeaturizerKind::CharNgram, &docs, 200).unwrap()
    }

    fn cfg(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_authors: 2,
            samples_per_author: 2,
            epochs,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let samples = mini_corpus();
        let featurizer = fitted(&samples);
        let model =
            EncoderModel::init(EncoderConfig::with_input_dim(featurizer.dim(), 1)).unwrap();
        let before = model.clone();
        let (after, log) = train(model, &samples, Repr::Asm, &featurizer, &cfg(0, 9)).unwrap();
        assert_eq!(before, after);
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_weights() {
        let samples = mini_corpus();
        let featurizer = fitted(&samples);
        let init = EncoderModel::init(EncoderConfig::with_input_dim(featurizer.dim(), 1)).unwrap();
        let (a, log_a) = train(init.clone(), &samples, Repr::Asm, &featurizer, &cfg(3, 42)).unwrap();
        let (b, log_b) = train(init.clone(), &samples, Repr::Asm, &featurizer, &cfg(3, 42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
        let (c, _) = train(init, &samples, Repr::Asm, &featurizer, &cfg(3, 43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn training_reduces_loss_on_separable_styles() {
        let samples = mini_corpus();
        let featurizer = fitted(&samples);
        let model =
            EncoderModel::init(EncoderConfig::with_input_dim(featurizer.dim(), 1)).unwrap();
        let (_, log) = train(model, &samples, Repr::Asm, &featurizer, &cfg(30, 7)).unwrap();
        let first = log.epochs.first().unwrap().mean_loss;
        let last = log.epochs.last().unwrap().mean_loss;
        assert!(
            last < first,
            "loss did not decrease: first {first}, last {last}"
        );
    }

    #[test]
    fn insufficient_authors_is_reported() {
        let samples = mini_corpus();
        let featurizer = fitted(&samples);
        let model =
            EncoderModel::init(EncoderConfig::with_input_dim(featurizer.dim(), 1)).unwrap();
        let mut too_many = cfg(1, 0);
        too_many.batch_authors = 5;
        let err = train(model, &samples, Repr::Asm, &featurizer, &too_many).unwrap_err();
        match err {
            TrainError::InsufficientAuthors {
                required_authors,
                available,
                ..
            } => {
                assert_eq!(required_authors, 5);
                assert_eq!(available, 4);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn missing_repr_names_function() {
        let samples = mini_corpus();
        let featurizer = fitted(&samples);
        let model =
            EncoderModel::init(EncoderConfig::with_input_dim(featurizer.dim(), 1)).unwrap();
        let err = train(model, &samples, Repr::Pcode2, &featurizer, &cfg(1, 0)).unwrap_err();
        match err {
            TrainError::MissingRepr { function_id, repr } => {
                assert_eq!(function_id, "alice_0");
                assert_eq!(repr, Repr::Pcode2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn log_serializes_one_record_per_epoch() {
        let log = TrainingLog {
            epochs: vec![
                EpochRecord {
                    epoch: 0,
                    mean_loss: 1.5,
                    batches: 4,
                },
                EpochRecord {
                    epoch: 1,
                    mean_loss: 0.75,
                    batches: 4,
                },
            ],
        };
        let jsonl = log.to_jsonl();
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            r#"{"epoch":0,"mean_loss":1.5,"batches":4}"#
        );
    }
}
