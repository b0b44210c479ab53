use std::path::PathBuf;

use authormatch::corpus::Repr;
use authormatch::encoder::load_model;
use authormatch::evalkit::dump_embeddings;
use clap::Args;
use serde::Deserialize;

use crate::config::{pick_required, FileConfig};
use crate::error::CliError;

use super::parse_repr;

#[derive(Args)]
pub struct EmbedArgs {
    /// Corpus to embed (JSON lines).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Representation to embed.
    #[arg(long, value_parser = parse_repr)]
    pub repr: Option<Repr>,
    /// Output path (JSON lines, one embedding per function).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for interface uniformity; embedding is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedFileConfig {
    corpus: Option<PathBuf>,
    model: Option<PathBuf>,
    repr: Option<Repr>,
    out: Option<PathBuf>,
    #[allow(dead_code)]
    seed: Option<u64>,
}

pub fn run(args: EmbedArgs, config: &FileConfig) -> Result<(), CliError> {
    let file: EmbedFileConfig = config.section("embed")?;
    let corpus_path = pick_required(args.corpus, file.corpus, "corpus")?;
    let model_path = pick_required(args.model, file.model, "model")?;
    let repr = pick_required(args.repr, file.repr, "repr")?;
    let out = pick_required(args.out, file.out, "out")?;

    let (model, featurizer) = load_model(&model_path)?;
    let labeled = super::load_labeled(&corpus_path)?;
    super::require_repr(&labeled, repr)?;
    dump_embeddings(&model, &featurizer, &labeled, repr, &out)?;
    eprintln!("wrote {} embeddings to {}", labeled.len(), out.display());
    Ok(())
}
