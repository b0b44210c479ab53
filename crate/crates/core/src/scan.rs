//! Update scanning: embed the previous version's functions as a corpus,
//! profile every changed or added function of the new version by its
//! minimum cosine distance to that corpus, and flag functions above the
//! dynamic threshold as possibly written by a new author.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{derive_threshold, CalibrationError, ScoreDomain, Threshold, ThresholdSource};
use crate::corpus::{truncate_tokens, FunctionSample, Repr, TOKEN_LIMIT};
use crate::encoder::EncoderModel;
use crate::repr::{clean_hex, FittedFeaturizer};

/// Reason string recorded for functions under the instruction cutoff.
pub const SKIP_BELOW_MIN_INSTRUCTIONS: &str = "below_min_instructions";

/// How the scan threshold is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSpec {
    /// Fit the supplied same-author scores and use θ = E(X_min) with
    /// n = corpus size.
    Dynamic,
    /// Use a fixed distance threshold.
    Manual(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Representation to embed and diff on.
    pub repr: Repr,
    /// Functions with fewer non-empty `asm` lines than this are recorded
    /// but not profiled.
    pub min_instruction_count: usize,
    pub threshold: ThresholdSpec,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            repr: Repr::Asm,
            min_instruction_count: 50,
            threshold: ThresholdSpec::Dynamic,
        }
    }
}

/// Per-function scan outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub function_id: String,
    pub min_distance: Option<f64>,
    pub nearest_corpus_id: Option<String>,
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub corpus_size: usize,
    pub theta: Threshold,
    pub entries: Vec<ScanEntry>,
}

impl ScanReport {
    /// CSV summary (function_id, min_distance, flagged) for spreadsheet
    /// triage; skipped entries have an empty distance column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("function_id,min_distance,flagged\n");
        for e in &self.entries {
            let distance = e.min_distance.map(|d| d.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e.function_id, distance, e.flagged));
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ScanError> {
        let mut bytes = serde_json::to_vec(self).expect("report serializes");
        bytes.push(b'\n');
        crate::write_atomic(path, &bytes)?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("old corpus is empty")]
    EmptyCorpus,
    #[error("function {function_id:?} is missing representation {repr}")]
    MissingRepr { function_id: String, repr: Repr },
    #[error("function {function_id:?} featurizes to a zero vector")]
    ZeroFeatures { function_id: String },
    #[error("calibration failed: {0}")]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Encoder(#[from] crate::encoder::EncoderError),
    #[error(transparent)]
    Contrastive(#[from] crate::contrastive::ContrastiveError),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
}

/// Functions of `new` that are absent from `old` (by function name) or
/// whose text changed. Texts are hex-cleaned before comparison so that
/// relocated but otherwise identical functions do not count as changed.
pub fn changed_functions(
    old: &[FunctionSample],
    new: &[FunctionSample],
    repr: Repr,
) -> Vec<FunctionSample> {
    let mut old_texts: HashMap<&str, Vec<String>> = HashMap::new();
    for sample in old {
        let text = sample.repr_text(repr).map(clean_hex).unwrap_or_default();
        old_texts
            .entry(sample.function_name.as_str())
            .or_default()
            .push(text);
    }
    new.iter()
        .filter(|sample| {
            let text = sample.repr_text(repr).map(clean_hex).unwrap_or_default();
            match old_texts.get(sample.function_name.as_str()) {
                None => true,                              // added
                Some(texts) => !texts.contains(&text),     // changed
            }
        })
        .cloned()
        .collect()
}

/// Count of non-empty lines of the `asm` representation (falling back to
/// `asm_clean`); 0 when neither is present.
pub fn instruction_count(sample: &FunctionSample) -> usize {
    sample
        .repr_text(Repr::Asm)
        .or_else(|| sample.repr_text(Repr::AsmClean))
        .map(|text| text.lines().filter(|l| !l.trim().is_empty()).count())
        .unwrap_or(0)
}

/// Scan an update: embed all `old` functions, derive the threshold, and
/// profile every changed or added function of `new` by minimum distance
/// d = 1 - cos, clamped to [0, 1]. Entries are flagged iff
/// `min_distance > theta`.
///
/// `same_author_scores` are cosine similarities of known same-author pairs
/// (e.g. from held-out training pairs); they are mapped to distances for
/// the dynamic threshold fit and ignored for a manual threshold.
pub fn scan_update(
    model: &EncoderModel,
    featurizer: &FittedFeaturizer,
    old: &[FunctionSample],
    new: &[FunctionSample],
    cfg: &ScanConfig,
    same_author_scores: &[f64],
) -> Result<ScanReport, ScanError> {
    if old.is_empty() {
        return Err(ScanError::EmptyCorpus);
    }
    let corpus_size = old.len();

    let corpus: Vec<(&str, Vec<f64>)> = old
        .iter()
        .map(|s| Ok((s.function_id.as_str(), embed(model, featurizer, s, cfg.repr)?)))
        .collect::<Result<_, ScanError>>()?;

    let theta = match cfg.threshold {
        ThresholdSpec::Dynamic => {
            let (_, threshold) =
                derive_threshold(same_author_scores, corpus_size, ScoreDomain::Distance)?;
            threshold
        }
        ThresholdSpec::Manual(value) => Threshold {
            value,
            n: corpus_size,
            source: ThresholdSource::Manual,
        },
    };

    let mut entries = Vec::new();
    for function in changed_functions(old, new, cfg.repr) {
        if instruction_count(&function) < cfg.min_instruction_count {
            entries.push(ScanEntry {
                function_id: function.function_id.clone(),
                min_distance: None,
                nearest_corpus_id: None,
                flagged: false,
                skipped_reason: Some(SKIP_BELOW_MIN_INSTRUCTIONS.to_string()),
            });
            continue;
        }
        let query = embed(model, featurizer, &function, cfg.repr)?;
        let mut min_distance = f64::INFINITY;
        let mut nearest = corpus[0].0;
        for (id, reference) in &corpus {
            let sim = crate::contrastive::cosine_similarity(&query, reference)?;
            let distance = (1.0 - sim).clamp(0.0, 1.0);
            if distance < min_distance {
                min_distance = distance;
                nearest = id;
            }
        }
        entries.push(ScanEntry {
            function_id: function.function_id.clone(),
            min_distance: Some(min_distance),
            nearest_corpus_id: Some(nearest.to_string()),
            flagged: min_distance > theta.value,
            skipped_reason: None,
        });
    }

    Ok(ScanReport {
        corpus_size,
        theta,
        entries,
    })
}

fn embed(
    model: &EncoderModel,
    featurizer: &FittedFeaturizer,
    sample: &FunctionSample,
    repr: Repr,
) -> Result<Vec<f64>, ScanError> {
    let text = sample.repr_text(repr).ok_or_else(|| ScanError::MissingRepr {
        function_id: sample.function_id.clone(),
        repr,
    })?;
    let features = featurizer.featurize(&truncate_tokens(text, TOKEN_LIMIT));
    if features.l2_norm() == 0.0 {
        return Err(ScanError::ZeroFeatures {
            function_id: sample.function_id.clone(),
        });
    }
    Ok(model.forward(&features.values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AuthorShare;
    use crate::encoder::EncoderConfig;
    use crate::repr::FeaturizerKind;
    use std::collections::BTreeMap;

    fn sample(id: &str, name: &str, asm: &str) -> FunctionSample {
        FunctionSample {
            function_id: id.into(),
            project: "p".into(),
            binary_id: "b".into(),
            function_name: name.into(),
            authors: vec![AuthorShare {
                name: "a".into(),
                share: 1.0,
            }],
            reprs: BTreeMap::from([(Repr::Asm, asm.into())]),
        }
    }

    fn setup(docs: &[&str]) -> (EncoderModel, FittedFeaturizer) {
        let docs: Vec<String> = docs.iter().map(|s| s.to_string()).collect();
        let featurizer = FittedFeaturizer::fit(FeaturizerKind::CharNgram, &docs, 200).unwrap();
        let model =
            EncoderModel::init(EncoderConfig::with_input_dim(featurizer.dim(), 17)).unwrap();
        (model, featurizer)
    }

    #[test]
    fn identical_versions_have_no_changes() {
        let old = vec![sample("o1", "f", "PUSH RBP"), sample("o2", "g", "POP RBP")];
        let new = vec![sample("n1", "f", "PUSH RBP"), sample("n2", "g", "POP RBP")];
        assert!(changed_functions(&old, &new, Repr::Asm).is_empty());
    }

    #[test]
    fn added_function_is_detected() {
        let old = vec![sample("o1", "f", "PUSH RBP")];
        let new = vec![sample("n1", "f", "PUSH RBP"), sample("n2", "g", "POP RBP")];
        let changed = changed_functions(&old, &new, Repr::Asm);
        assert_eq!(changed.len(), 1);
        assert_eq!(changed[0].function_id, "n2");
    }

    #[test]
    fn modified_function_is_detected_but_address_shift_is_not() {
        let old = vec![sample("o1", "f", "CALL 0x1111\nRET")];
        let shifted = vec![sample("n1", "f", "CALL 0x2222\nRET")];
        assert!(changed_functions(&old, &shifted, Repr::Asm).is_empty());
        let modified = vec![sample("n1", "f", "CALL 0x1111\nNOP\nRET")];
        assert_eq!(changed_functions(&old, &modified, Repr::Asm).len(), 1);
    }

    #[test]
    fn instruction_count_ignores_blank_lines() {
        let s = sample("s", "f", "PUSH RBP\n\n  \nMOV RBP,RSP\nRET");
        assert_eq!(instruction_count(&s), 3);
        let none = FunctionSample {
            reprs: BTreeMap::from([(Repr::Source, "int f;".to_string())]),
            ..sample("s", "f", "")
        };
        assert_eq!(instruction_count(&none), 0);
    }

    #[test]
    fn exact_match_has_zero_distance_and_no_flag() {
        let text = "PUSH RBP MOV RBP,RSP RET";
        let (model, featurizer) = setup(&[text, "XOR EAX,EAX RET"]);
        let old = vec![sample("o1", "f", text), sample("o2", "g", "XOR EAX,EAX RET")];
        let new = vec![sample("n1", "h", text)];
        let cfg = ScanConfig {
            repr: Repr::Asm,
            min_instruction_count: 0,
            threshold: ThresholdSpec::Manual(0.25),
        };
        let report = scan_update(&model, &featurizer, &old, &new, &cfg, &[]).unwrap();
        assert_eq!(report.corpus_size, 2);
        assert_eq!(report.entries.len(), 1);
        let entry = &report.entries[0];
        assert_eq!(entry.min_distance, Some(0.0));
        assert_eq!(entry.nearest_corpus_id.as_deref(), Some("o1"));
        assert!(!entry.flagged);
    }

    #[test]
    fn dissimilar_function_is_flagged() {
        let (model, featurizer) = setup(&["AAAA BBBB CCCC", "DDDD EEEE FFFF"]);
        let old = vec![
            sample("o1", "f", "AAAA BBBB CCCC"),
            sample("o2", "g", "AAAA BBBB CCCC"),
        ];
        let new = vec![sample("n1", "h", "DDDD EEEE FFFF")];
        let cfg = ScanConfig {
            repr: Repr::Asm,
            min_instruction_count: 0,
            threshold: ThresholdSpec::Manual(0.1),
        };
        let report = scan_update(&model, &featurizer, &old, &new, &cfg, &[]).unwrap();
        let entry = &report.entries[0];
        assert!(entry.min_distance.unwrap() > 0.1);
        assert!(entry.flagged);
    }

    #[test]
    fn short_functions_are_skipped_with_reason() {
        let (model, featurizer) = setup(&["AAAA BBBB", "CCCC DDDD"]);
        let old = vec![sample("o1", "f", "AAAA BBBB")];
        let new = vec![sample("n1", "g", "CCCC DDDD")];
        let cfg = ScanConfig {
            repr: Repr::Asm,
            min_instruction_count: 50,
            threshold: ThresholdSpec::Manual(0.5),
        };
        let report = scan_update(&model, &featurizer, &old, &new, &cfg, &[]).unwrap();
        let entry = &report.entries[0];
        assert_eq!(entry.skipped_reason.as_deref(), Some(SKIP_BELOW_MIN_INSTRUCTIONS));
        assert_eq!(entry.min_distance, None);
        assert!(!entry.flagged);
    }

    #[test]
    fn flag_set_shrinks_as_corpus_grows() {
        let texts = ["AAAA BBBB", "CCCC DDDD", "AAAA DDDD", "CCCC BBBB"];
        let (model, featurizer) = setup(&texts);
        let small = vec![sample("o1", "f1", texts[0])];
        let large = vec![
            sample("o1", "f1", texts[0]),
            sample("o2", "f2", texts[1]),
            sample("o3", "f3", texts[2]),
        ];
        let new = vec![sample("n1", "q1", texts[1]), sample("n2", "q2", texts[3])];
        let cfg = ScanConfig {
            repr: Repr::Asm,
            min_instruction_count: 0,
            threshold: ThresholdSpec::Manual(0.3),
        };
        let with_small = scan_update(&model, &featurizer, &small, &new, &cfg, &[]).unwrap();
        let with_large = scan_update(&model, &featurizer, &large, &new, &cfg, &[]).unwrap();
        for (a, b) in with_small.entries.iter().zip(&with_large.entries) {
            assert!(b.min_distance.unwrap() <= a.min_distance.unwrap() + 1e-15);
            assert!(!b.flagged || a.flagged);
        }
    }

    #[test]
    fn dynamic_threshold_comes_from_calibration() {
        let (model, featurizer) = setup(&["AAAA BBBB", "CCCC DDDD"]);
        let old = vec![sample("o1", "f", "AAAA BBBB")];
        let new = vec![sample("n1", "g", "CCCC DDDD")];
        let cfg = ScanConfig {
            repr: Repr::Asm,
            min_instruction_count: 0,
            threshold: ThresholdSpec::Dynamic,
        };
        let scores = [0.95, 0.97, 0.96, 0.94, 0.98, 0.93, 0.96, 0.95];
        let report = scan_update(&model, &featurizer, &old, &new, &cfg, &scores).unwrap();
        assert_eq!(report.theta.n, 1);
        assert_eq!(report.theta.source, ThresholdSource::ExpectedMinimum);
        // n = 1: theta is the mean distance of the calibration sample.
        let mean_distance = scores.iter().map(|s| 1.0 - s).sum::<f64>() / scores.len() as f64;
        assert!((report.theta.value - mean_distance).abs() < 1e-6);

        let empty_scores = scan_update(&model, &featurizer, &old, &new, &cfg, &[]);
        assert!(matches!(empty_scores, Err(ScanError::Calibration(_))));
    }

    #[test]
    fn empty_old_corpus_is_an_error() {
        let (model, featurizer) = setup(&["AAAA"]);
        assert!(matches!(
            scan_update(
                &model,
                &featurizer,
                &[],
                &[sample("n", "f", "AAAA")],
                &ScanConfig::default(),
                &[]
            ),
            Err(ScanError::EmptyCorpus)
        ));
    }

    #[test]
    fn csv_summary_has_one_row_per_entry() {
        let report = ScanReport {
            corpus_size: 2,
            theta: Threshold {
                value: 0.0119,
                n: 2,
                source: ThresholdSource::Manual,
            },
            entries: vec![
                ScanEntry {
                    function_id: "a".into(),
                    min_distance: Some(0.5),
                    nearest_corpus_id: Some("o".into()),
                    flagged: true,
                    skipped_reason: None,
                },
                ScanEntry {
                    function_id: "b".into(),
                    min_distance: None,
                    nearest_corpus_id: None,
                    flagged: false,
                    skipped_reason: Some(SKIP_BELOW_MIN_INSTRUCTIONS.into()),
                },
            ],
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "function_id,min_distance,flagged");
        assert_eq!(lines[1], "a,0.5,true");
        assert_eq!(lines[2], "b,,false");
    }
}
