pub mod calibrate;
pub mod clean;
pub mod embed;
pub mod eval;
pub mod scan;
pub mod train;

use std::path::Path;

use authormatch::corpus::{label_samples, load_corpus, FunctionSample, LabeledSample, Repr};

use crate::error::{usage, CliError};

pub fn parse_repr(s: &str) -> Result<Repr, String> {
    s.parse().map_err(|e| format!("{e}"))
}

pub fn load_corpus_file(path: &Path) -> Result<Vec<FunctionSample>, CliError> {
    load_corpus(path)
        .map_err(|e| CliError::Data(anyhow::anyhow!("corpus {}: {e}", path.display())))
}

/// Load a corpus and keep only functions with a majority author.
pub fn load_labeled(path: &Path) -> Result<Vec<LabeledSample>, CliError> {
    let samples = load_corpus_file(path)?;
    let labeled = label_samples(samples);
    if labeled.is_empty() {
        return Err(CliError::Data(anyhow::anyhow!(
            "corpus {}: no function has a majority author",
            path.display()
        )));
    }
    Ok(labeled)
}

/// Check that every sample carries the representation, naming the first
/// offender.
pub fn require_repr(samples: &[LabeledSample], repr: Repr) -> Result<(), CliError> {
    for s in samples {
        if s.sample.repr_text(repr).is_none() {
            return Err(CliError::Data(anyhow::anyhow!(
                "function {:?} is missing representation {repr}",
                s.sample.function_id
            )));
        }
    }
    Ok(())
}

/// Scores file: a JSON array of cosine similarities.
pub fn load_scores(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(anyhow::anyhow!("scores {}: {e}", path.display())))?;
    let scores: Vec<f64> = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(anyhow::anyhow!("scores {}: {e}", path.display())))?;
    Ok(scores)
}

pub fn write_json_report<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec(value).expect("report serializes");
    bytes.push(b'\n');
    authormatch::write_atomic(path, &bytes)
        .map_err(|e| CliError::Data(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    Ok(())
}

pub fn parse_featurizer_kind(s: &str) -> Result<authormatch::repr::FeaturizerKind, String> {
    match s {
        "tfidf" => Ok(authormatch::repr::FeaturizerKind::CharTfidf),
        "ngram" => Ok(authormatch::repr::FeaturizerKind::CharNgram),
        other => Err(format!("unknown featurizer {other:?} (expected tfidf or ngram)")),
    }
}

/// `--split` choices shared by train and eval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitChoice {
    All,
    Train,
    Eval,
}

pub fn parse_split(s: &str) -> Result<SplitChoice, String> {
    match s {
        "all" => Ok(SplitChoice::All),
        "train" => Ok(SplitChoice::Train),
        "eval" => Ok(SplitChoice::Eval),
        other => Err(format!("unknown split {other:?} (expected all, train, or eval)")),
    }
}

/// Restrict labeled samples to one side of the author split.
pub fn apply_split(
    labeled: Vec<LabeledSample>,
    choice: SplitChoice,
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>, CliError> {
    if choice == SplitChoice::All {
        return Ok(labeled);
    }
    let split = authormatch::corpus::split_by_author(&labeled, train_fraction, seed)
        .map_err(|e| usage(format!("author split: {e}")))?;
    let keep = match choice {
        SplitChoice::Train => split.train_authors,
        SplitChoice::Eval => split.eval_authors,
        SplitChoice::All => unreachable!(),
    };
    Ok(labeled
        .into_iter()
        .filter(|s| keep.contains(&s.owner))
        .collect())
}
