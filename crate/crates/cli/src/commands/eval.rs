use std::path::PathBuf;

use authormatch::corpus::{sample_pairs, PairLabel, Repr};
use authormatch::encoder::load_model;
use authormatch::evalkit::{auroc, score_pairs, threshold_metrics, MetricsReport, PairCounts};
use clap::Args;
use serde::Deserialize;

use crate::config::{pick, pick_required, FileConfig};
use crate::error::CliError;

use super::{apply_split, parse_repr, parse_split, SplitChoice};

#[derive(Args)]
pub struct EvalArgs {
    /// Evaluation corpus (JSON lines).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Representation to evaluate on.
    #[arg(long, value_parser = parse_repr)]
    pub repr: Option<Repr>,
    /// Verdict threshold for the thresholded metrics.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Same-author pairs to sample.
    #[arg(long)]
    pub positives: Option<usize>,
    /// Different-author pairs to sample.
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Metrics report output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON array of positive-pair scores (calibration input).
    #[arg(long)]
    pub dump_scores: Option<PathBuf>,
    /// Which side of the author split to evaluate: eval or all.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitChoice>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFileConfig {
    corpus: Option<PathBuf>,
    model: Option<PathBuf>,
    repr: Option<Repr>,
    theta: Option<f64>,
    positives: Option<usize>,
    negatives: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    dump_scores: Option<PathBuf>,
    split: Option<SplitChoice>,
    train_fraction: Option<f64>,
}

pub fn run(args: EvalArgs, config: &FileConfig) -> Result<(), CliError> {
    let file: EvalFileConfig = config.section("eval")?;
    let corpus_path = pick_required(args.corpus, file.corpus, "corpus")?;
    let model_path = pick_required(args.model, file.model, "model")?;
    let repr = pick_required(args.repr, file.repr, "repr")?;
    let out = pick_required(args.out, file.out, "out")?;
    let theta = pick(args.theta, file.theta, 0.84);
    let positives = pick(args.positives, file.positives, 1000);
    let negatives = pick(args.negatives, file.negatives, 1000);
    let seed = pick(args.seed, file.seed, 0);
    let split_choice = pick(args.split, file.split, SplitChoice::All);
    let train_fraction = pick(args.train_fraction, file.train_fraction, 0.8);

    let (model, featurizer) = load_model(&model_path)?;
    let labeled = super::load_labeled(&corpus_path)?;
    let eval_set = apply_split(labeled, split_choice, train_fraction, seed)?;
    super::require_repr(&eval_set, repr)?;

    let pairs = sample_pairs(&eval_set, positives, negatives, seed)?;
    let scored = score_pairs(&model, &featurizer, &eval_set, &pairs, repr)?;
    let auc = auroc(&scored)?;
    let (metrics, warnings) = threshold_metrics(&scored, theta)?;
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
    let report = MetricsReport {
        auroc: auc,
        theta,
        accuracy: metrics.accuracy,
        precision: metrics.precision,
        recall: metrics.recall,
        f1: metrics.f1,
        pairs: PairCounts {
            positive: scored
                .iter()
                .filter(|s| s.pair.label == PairLabel::Same)
                .count(),
            negative: scored
                .iter()
                .filter(|s| s.pair.label == PairLabel::Different)
                .count(),
        },
    };
    super::write_json_report(&report, &out)?;

    if let Some(scores_path) = args.dump_scores.or(file.dump_scores) {
        let same_author_scores: Vec<f64> = scored
            .iter()
            .filter(|s| s.pair.label == PairLabel::Same)
            .map(|s| s.score)
            .collect();
        super::write_json_report(&same_author_scores, &scores_path)?;
    }
    eprintln!("auroc {:.4} on {} pairs; report written to {}", report.auroc,
        report.pairs.positive + report.pairs.negative, out.display());
    Ok(())
}
