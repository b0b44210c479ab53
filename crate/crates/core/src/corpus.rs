//! Corpus loading, labeling, author-disjoint splitting, and pair sampling.
//!
//! A corpus is a JSON-lines file with one object per binary function:
//!
//! ```json
//! {"function_id": "f1", "project": "curl", "binary_id": "curl-O0",
//!  "function_name": "parse_url",
//!  "authors": [{"name": "alice", "share": 0.8}, {"name": "bob", "share": 0.2}],
//!  "reprs": {"asm": "PUSH RBP\n...", "source": "int parse_url(...)"}}
//! ```
//!
//! Unknown keys and unknown representation names are rejected. A function
//! belongs to an author only if that author contributed at least 51% of it;
//! functions without a majority author are dropped from training and
//! evaluation. Evaluation pairs are always drawn from the same binary so
//! that pair scores measure style, not binary provenance.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum ownership share for a function to be attributed to one author.
pub const MAJORITY_SHARE: f64 = 0.51;

/// Default token cap applied to representation text before featurization.
pub const TOKEN_LIMIT: usize = 1000;

/// Tolerance above 1.0 allowed for the sum of ownership shares, absorbing
/// rounding in upstream ownership percentages.
pub const SHARE_SUM_TOLERANCE: f64 = 1e-6;

/// The eleven representation names a corpus record may carry.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Repr {
    Source,
    SourceClean,
    Decompiled,
    DecompiledClean,
    Asm,
    AsmClean,
    Pcode,
    PcodeClean,
    Pcode2,
    Pcode2Clean,
    RawHex,
}

impl Repr {
    pub const ALL: [Repr; 11] = [
        Repr::Source,
        Repr::SourceClean,
        Repr::Decompiled,
        Repr::DecompiledClean,
        Repr::Asm,
        Repr::AsmClean,
        Repr::Pcode,
        Repr::PcodeClean,
        Repr::Pcode2,
        Repr::Pcode2Clean,
        Repr::RawHex,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Repr::Source => "source",
            Repr::SourceClean => "source_clean",
            Repr::Decompiled => "decompiled",
            Repr::DecompiledClean => "decompiled_clean",
            Repr::Asm => "asm",
            Repr::AsmClean => "asm_clean",
            Repr::Pcode => "pcode",
            Repr::PcodeClean => "pcode_clean",
            Repr::Pcode2 => "pcode2",
            Repr::Pcode2Clean => "pcode2_clean",
            Repr::RawHex => "raw_hex",
        }
    }
}

impl fmt::Display for Repr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Repr {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Repr::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownRepr(s.to_string()))
    }
}

/// One author's ownership fraction of a function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorShare {
    pub name: String,
    pub share: f64,
}

/// One binary function with its ownership shares and representation texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSample {
    pub function_id: String,
    pub project: String,
    pub binary_id: String,
    pub function_name: String,
    pub authors: Vec<AuthorShare>,
    pub reprs: BTreeMap<Repr, String>,
}

impl FunctionSample {
    /// Text of one representation, if present.
    pub fn repr_text(&self, repr: Repr) -> Option<&str> {
        self.reprs.get(&repr).map(String::as_str)
    }

    /// Check the per-record invariants. `line` is used in error messages.
    pub fn validate(&self, line: usize) -> Result<(), CorpusError> {
        let mut sum = 0.0;
        for author in &self.authors {
            if !(0.0..=1.0).contains(&author.share) {
                return Err(CorpusError::ShareOutOfRange {
                    line,
                    function_id: self.function_id.clone(),
                    share: author.share,
                });
            }
            sum += author.share;
        }
        if sum <= 0.0 || sum > 1.0 + SHARE_SUM_TOLERANCE {
            return Err(CorpusError::ShareSumOutOfRange {
                line,
                function_id: self.function_id.clone(),
                sum,
            });
        }
        if self.reprs.is_empty() {
            return Err(CorpusError::NoReprs {
                line,
                function_id: self.function_id.clone(),
            });
        }
        if let Some(hex) = self.repr_text(Repr::RawHex) {
            let valid = hex.len() % 2 == 0
                && hex.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
            if !valid {
                return Err(CorpusError::BadRawHex {
                    line,
                    function_id: self.function_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// A function together with the author who owns at least 51% of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample: FunctionSample,
    pub owner: String,
}

/// Ground-truth label for an evaluation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Same,
    Different,
}

/// An unordered same-binary pair of functions, referenced by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePair {
    pub left: String,
    pub right: String,
    pub label: PairLabel,
}

/// Disjoint train/eval author sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorSplit {
    pub train_authors: BTreeSet<String>,
    pub eval_authors: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record, line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("duplicate function_id {function_id:?} on lines {first_line} and {second_line}")]
    DuplicateFunctionId {
        function_id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("share out of range, line {line}: function {function_id:?} has share {share}")]
    ShareOutOfRange {
        line: usize,
        function_id: String,
        share: f64,
    },
    #[error(
        "share sum out of range, line {line}: function {function_id:?} shares sum to {sum}"
    )]
    ShareSumOutOfRange {
        line: usize,
        function_id: String,
        sum: f64,
    },
    #[error("empty reprs, line {line}: function {function_id:?} has no representations")]
    NoReprs { line: usize, function_id: String },
    #[error("invalid raw_hex, line {line}: function {function_id:?} (must be lowercase hex of even length)")]
    BadRawHex { line: usize, function_id: String },
    #[error("unknown representation name {0:?}")]
    UnknownRepr(String),
    #[error("need at least 2 distinct owners to split, found {0}")]
    TooFewOwners(usize),
    #[error("train fraction must be in (0, 1), got {0}")]
    BadTrainFraction(f64),
    #[error("no same-binary pairs available for class {class:?}")]
    NoPairsForClass { class: PairClass },
}

/// Pair class named by [`CorpusError::NoPairsForClass`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairClass {
    Positive,
    Negative,
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairClass::Positive => f.write_str("positive"),
            PairClass::Negative => f.write_str("negative"),
        }
    }
}

/// Load and validate a JSON-lines corpus file. Record order is preserved.
pub fn load_corpus(path: &Path) -> Result<Vec<FunctionSample>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text)
}

/// Parse corpus text (one JSON object per line; blank lines are skipped but
/// still counted for error reporting).
pub fn parse_corpus(text: &str) -> Result<Vec<FunctionSample>, CorpusError> {
    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let sample: FunctionSample =
            serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
                line,
                detail: e.to_string(),
            })?;
        sample.validate(line)?;
        if let Some(&first_line) = seen.get(&sample.function_id) {
            return Err(CorpusError::DuplicateFunctionId {
                function_id: sample.function_id,
                first_line,
                second_line: line,
            });
        }
        seen.insert(sample.function_id.clone(), line);
        samples.push(sample);
    }
    Ok(samples)
}

/// The author owning at least 51% of the function, if any. At most one
/// author can reach the threshold because shares sum to at most 1.
pub fn majority_author(sample: &FunctionSample) -> Option<&str> {
    sample
        .authors
        .iter()
        .find(|a| a.share >= MAJORITY_SHARE)
        .map(|a| a.name.as_str())
}

/// Attach majority-author labels, dropping functions without one.
pub fn label_samples(samples: Vec<FunctionSample>) -> Vec<LabeledSample> {
    samples
        .into_iter()
        .filter_map(|sample| {
            let owner = majority_author(&sample)?.to_string();
            Some(LabeledSample { sample, owner })
        })
        .collect()
}

/// Split distinct owners into disjoint train/eval sets. The train set gets
/// `floor(owners * train_fraction)` authors; assignment is a seeded shuffle.
pub fn split_by_author(
    samples: &[LabeledSample],
    train_fraction: f64,
    seed: u64,
) -> Result<AuthorSplit, CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::BadTrainFraction(train_fraction));
    }
    let owners: BTreeSet<&str> = samples.iter().map(|s| s.owner.as_str()).collect();
    if owners.len() < 2 {
        return Err(CorpusError::TooFewOwners(owners.len()));
    }
    let mut ordered: Vec<&str> = owners.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ordered.shuffle(&mut rng);
    let train_count = ((ordered.len() as f64) * train_fraction).floor() as usize;
    // floor() can leave either side empty at extreme fractions; both sides
    // must be populated for an author-disjoint evaluation.
    let train_count = train_count.clamp(1, ordered.len() - 1);
    let (train, eval) = ordered.split_at(train_count);
    Ok(AuthorSplit {
        train_authors: train.iter().map(|s| s.to_string()).collect(),
        eval_authors: eval.iter().map(|s| s.to_string()).collect(),
    })
}

/// Sample up to `positive_count` same-owner and `negative_count`
/// different-owner pairs, all drawn from within a single binary, without
/// duplicate unordered pairs. A class with count 0 is skipped entirely;
/// a class with a positive count but no candidates is an error.
pub fn sample_pairs(
    samples: &[LabeledSample],
    positive_count: usize,
    negative_count: usize,
    seed: u64,
) -> Result<Vec<SamplePair>, CorpusError> {
    let mut by_binary: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_binary.entry(s.sample.binary_id.as_str()).or_default().push(i);
    }

    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for indices in by_binary.values() {
        for (a, &i) in indices.iter().enumerate() {
            for &j in &indices[a + 1..] {
                if samples[i].owner == samples[j].owner {
                    positives.push((i, j));
                } else {
                    negatives.push((i, j));
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (candidates, count, label, class) in [
        (&mut positives, positive_count, PairLabel::Same, PairClass::Positive),
        (&mut negatives, negative_count, PairLabel::Different, PairClass::Negative),
    ] {
        if count == 0 {
            continue;
        }
        if candidates.is_empty() {
            return Err(CorpusError::NoPairsForClass { class });
        }
        candidates.shuffle(&mut rng);
        out.extend(candidates.iter().take(count).map(|&(i, j)| SamplePair {
            left: samples[i].sample.function_id.clone(),
            right: samples[j].sample.function_id.clone(),
            label,
        }));
    }
    Ok(out)
}

/// Keep the first `limit` whitespace-delimited tokens, joined by single
/// spaces. Idempotent; text at or under the limit only has its whitespace
/// normalized.
pub fn truncate_tokens(text: &str, limit: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().take(limit).collect();
    tokens.join(" ")
}
