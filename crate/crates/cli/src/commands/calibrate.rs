use std::path::PathBuf;

use authormatch::calibration::{derive_threshold, CalibrationReport, ScoreDomain};
use clap::Args;
use serde::Deserialize;

use crate::config::{pick, pick_required, FileConfig};
use crate::error::CliError;

#[derive(Args)]
pub struct CalibrateArgs {
    /// JSON array of same-author cosine similarities.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Number of comparisons the threshold must survive.
    #[arg(long)]
    pub n: Option<usize>,
    /// similarity or distance.
    #[arg(long, value_parser = parse_domain)]
    pub domain: Option<ScoreDomain>,
    /// Calibration report output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for interface uniformity; calibration is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateFileConfig {
    scores: Option<PathBuf>,
    n: Option<usize>,
    domain: Option<ScoreDomain>,
    out: Option<PathBuf>,
    #[allow(dead_code)]
    seed: Option<u64>,
}

fn parse_domain(s: &str) -> Result<ScoreDomain, String> {
    match s {
        "similarity" => Ok(ScoreDomain::Similarity),
        "distance" => Ok(ScoreDomain::Distance),
        other => Err(format!("unknown domain {other:?} (expected similarity or distance)")),
    }
}

pub fn run(args: CalibrateArgs, config: &FileConfig) -> Result<(), CliError> {
    let file: CalibrateFileConfig = config.section("calibrate")?;
    let scores_path = pick_required(args.scores, file.scores, "scores")?;
    let n = pick(args.n, file.n, 1);
    let domain = pick(args.domain, file.domain, ScoreDomain::Distance);
    let out = pick_required(args.out, file.out, "out")?;

    let scores = super::load_scores(&scores_path)?;
    let (fit, threshold) = derive_threshold(&scores, n, domain)?;
    let report = CalibrationReport {
        alpha: fit.alpha,
        beta: fit.beta,
        domain: fit.domain,
        n: threshold.n,
        theta: threshold.value,
        fitted_on: fit.fitted_on,
    };
    super::write_json_report(&report, &out)?;
    eprintln!(
        "theta = {:.6} for n = {n} (Beta({:.4}, {:.4}) over {} scores)",
        report.theta, report.alpha, report.beta, report.fitted_on
    );
    Ok(())
}
