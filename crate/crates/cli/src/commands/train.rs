use std::path::PathBuf;

use authormatch::corpus::{truncate_tokens, Repr, TOKEN_LIMIT};
use authormatch::encoder::{save_model, EncoderConfig, EncoderModel};
use authormatch::repr::{FeaturizerKind, FittedFeaturizer, MAX_FEATURES};
use authormatch::train::{train, TrainConfig};
use clap::Args;
use serde::Deserialize;

use crate::config::{pick, pick_required, FileConfig};
use crate::error::CliError;

use super::{apply_split, parse_featurizer_kind, parse_repr, parse_split, SplitChoice};

#[derive(Args)]
pub struct TrainArgs {
    /// Training corpus (JSON lines).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Representation to train on (e.g. asm_clean).
    #[arg(long, value_parser = parse_repr)]
    pub repr: Option<Repr>,
    /// Featurizer kind: tfidf or ngram.
    #[arg(long, value_parser = parse_featurizer_kind)]
    pub featurizer: Option<FeaturizerKind>,
    /// Output model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training-log path (default: model path with .log.jsonl extension).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Feature cap for the featurizer.
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub output_dim: Option<usize>,
    #[arg(long)]
    pub num_hidden_layers: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Authors per batch (P).
    #[arg(long)]
    pub batch_authors: Option<usize>,
    /// Samples per author per batch (K).
    #[arg(long)]
    pub samples_per_author: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Which side of the author split to train on: train or all.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitChoice>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    corpus: Option<PathBuf>,
    repr: Option<Repr>,
    featurizer: Option<FeaturizerKind>,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
    seed: Option<u64>,
    epochs: Option<usize>,
    max_features: Option<usize>,
    hidden_dim: Option<usize>,
    output_dim: Option<usize>,
    num_hidden_layers: Option<usize>,
    temperature: Option<f64>,
    batch_authors: Option<usize>,
    samples_per_author: Option<usize>,
    learning_rate: Option<f64>,
    split: Option<SplitChoice>,
    train_fraction: Option<f64>,
}

pub fn run(args: TrainArgs, config: &FileConfig) -> Result<(), CliError> {
    let file: TrainFileConfig = config.section("train")?;
    let corpus_path = pick_required(args.corpus, file.corpus, "corpus")?;
    let repr = pick_required(args.repr, file.repr, "repr")?;
    let kind = pick_required(args.featurizer, file.featurizer, "featurizer")?;
    let out = pick_required(args.out, file.out, "out")?;
    let log_path = pick(args.log, file.log, out.with_extension("log.jsonl"));
    let seed = pick(args.seed, file.seed, 0);
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        temperature: pick(args.temperature, file.temperature, defaults.temperature),
        batch_authors: pick(args.batch_authors, file.batch_authors, defaults.batch_authors),
        samples_per_author: pick(
            args.samples_per_author,
            file.samples_per_author,
            defaults.samples_per_author,
        ),
        epochs: pick(args.epochs, file.epochs, defaults.epochs),
        learning_rate: pick(args.learning_rate, file.learning_rate, defaults.learning_rate),
        optimizer: defaults.optimizer,
        seed,
    };
    let split_choice = pick(args.split, file.split, SplitChoice::Train);
    let train_fraction = pick(args.train_fraction, file.train_fraction, 0.8);
    let max_features = pick(args.max_features, file.max_features, MAX_FEATURES);

    let labeled = super::load_labeled(&corpus_path)?;
    let train_set = apply_split(labeled, split_choice, train_fraction, seed)?;
    super::require_repr(&train_set, repr)?;

    let documents: Vec<String> = train_set
        .iter()
        .map(|s| truncate_tokens(s.sample.repr_text(repr).expect("checked above"), TOKEN_LIMIT))
        .collect();
    let featurizer = FittedFeaturizer::fit(kind, &documents, max_features)?;

    let mut encoder_config = EncoderConfig::with_input_dim(featurizer.dim(), seed);
    if let Some(hidden) = args.hidden_dim.or(file.hidden_dim) {
        encoder_config.hidden_dim = hidden;
    }
    if let Some(output) = args.output_dim.or(file.output_dim) {
        encoder_config.output_dim = output;
    }
    if let Some(layers) = args.num_hidden_layers.or(file.num_hidden_layers) {
        encoder_config.num_hidden_layers = layers;
    }
    let model = EncoderModel::init(encoder_config)?;

    let (trained, training_log) = train(model, &train_set, repr, &featurizer, &cfg)?;
    save_model(&trained, &featurizer, &out)?;
    authormatch::write_atomic(&log_path, training_log.to_jsonl().as_bytes())
        .map_err(|e| CliError::Data(anyhow::anyhow!("writing {}: {e}", log_path.display())))?;
    eprintln!(
        "trained on {} functions ({} epochs); model written to {}",
        train_set.len(),
        cfg.epochs,
        out.display()
    );
    Ok(())
}
