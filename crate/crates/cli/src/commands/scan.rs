use std::path::PathBuf;

use authormatch::corpus::Repr;
use authormatch::encoder::load_model;
use authormatch::scan::{scan_update, ScanConfig, ThresholdSpec};
use clap::Args;
use serde::Deserialize;

use crate::config::{pick, pick_required, FileConfig};
use crate::error::{usage, CliError};

use super::parse_repr;

#[derive(Args)]
pub struct ScanArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Previous-version corpus (the reference).
    #[arg(long)]
    pub old: Option<PathBuf>,
    /// Updated-version corpus to scan.
    #[arg(long)]
    pub new: Option<PathBuf>,
    /// Representation to embed and diff on.
    #[arg(long, value_parser = parse_repr)]
    pub repr: Option<Repr>,
    /// Minimum asm instruction count for a function to be profiled.
    #[arg(long)]
    pub min_instructions: Option<usize>,
    /// Manual distance threshold (otherwise --scores drives calibration).
    #[arg(long)]
    pub theta: Option<f64>,
    /// JSON array of same-author similarities for dynamic calibration.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Scan report output path (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional CSV summary path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Accepted for interface uniformity; scanning is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanFileConfig {
    model: Option<PathBuf>,
    old: Option<PathBuf>,
    new: Option<PathBuf>,
    repr: Option<Repr>,
    min_instructions: Option<usize>,
    theta: Option<f64>,
    scores: Option<PathBuf>,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
    #[allow(dead_code)]
    seed: Option<u64>,
}

pub fn run(args: ScanArgs, config: &FileConfig) -> Result<(), CliError> {
    let file: ScanFileConfig = config.section("scan")?;
    let model_path = pick_required(args.model, file.model, "model")?;
    let old_path = pick_required(args.old, file.old, "old")?;
    let new_path = pick_required(args.new, file.new, "new")?;
    let repr = pick_required(args.repr, file.repr, "repr")?;
    let out = pick_required(args.out, file.out, "out")?;
    let min_instructions = pick(args.min_instructions, file.min_instructions, 50);
    let theta = args.theta.or(file.theta);
    let scores_path = args.scores.or(file.scores);
    let csv_path = args.csv.or(file.csv);

    let (threshold, scores) = match (theta, scores_path) {
        (Some(value), None) => (ThresholdSpec::Manual(value), Vec::new()),
        (None, Some(path)) => (ThresholdSpec::Dynamic, super::load_scores(&path)?),
        (Some(_), Some(_)) => {
            return Err(usage("--theta and --scores are mutually exclusive"));
        }
        (None, None) => {
            return Err(usage("scan needs either --theta or --scores"));
        }
    };

    let (model, featurizer) = load_model(&model_path)?;
    let old = super::load_corpus_file(&old_path)?;
    let new = super::load_corpus_file(&new_path)?;
    let cfg = ScanConfig {
        repr,
        min_instruction_count: min_instructions,
        threshold,
    };
    let report = scan_update(&model, &featurizer, &old, &new, &cfg, &scores)?;
    report.write_json(&out)?;
    if let Some(csv) = csv_path {
        authormatch::write_atomic(&csv, report.to_csv().as_bytes())
            .map_err(|e| CliError::Data(anyhow::anyhow!("writing {}: {e}", csv.display())))?;
    }
    let flagged = report.entries.iter().filter(|e| e.flagged).count();
    eprintln!(
        "scanned {} changed functions against {} (theta {:.6}): {} flagged",
        report.entries.len(),
        report.corpus_size,
        report.theta.value,
        flagged
    );
    Ok(())
}
