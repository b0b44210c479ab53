//! Character-level featurizers: plain character n-gram counts (n = 1..3)
//! and character TF-IDF (n = 1). Both keep at most `max_features` features,
//! chosen by document frequency with lexicographic tie-break so fitting is
//! deterministic regardless of document order.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default feature cap.
pub const MAX_FEATURES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturizerKind {
    CharTfidf,
    CharNgram,
}

/// A frozen vocabulary mapping text to a fixed-length feature vector.
///
/// Columns are assigned in selection order: descending document frequency,
/// ties broken lexicographically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedFeaturizer {
    kind: FeaturizerKind,
    n_range: (usize, usize),
    max_features: usize,
    features: Vec<String>,
    idf: Option<Vec<f64>>,
    fitted_on: usize,
    #[serde(skip)]
    index: OnceLock<HashMap<String, usize>>,
}

impl PartialEq for FittedFeaturizer {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.n_range == other.n_range
            && self.max_features == other.max_features
            && self.features == other.features
            && self.idf == other.idf
            && self.fitted_on == other.fitted_on
    }
}

/// Dense non-negative feature vector; L2-normalized unless all-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit featurizer on an empty document list")]
    NoDocuments,
}

impl FittedFeaturizer {
    /// Fit a featurizer of the given kind on training documents.
    pub fn fit(
        kind: FeaturizerKind,
        documents: &[String],
        max_features: usize,
    ) -> Result<FittedFeaturizer, FeatureError> {
        if documents.is_empty() {
            return Err(FeatureError::NoDocuments);
        }
        let n_range = match kind {
            FeaturizerKind::CharTfidf => (1, 1),
            FeaturizerKind::CharNgram => (1, 3),
        };

        let mut document_frequency: HashMap<String, usize> = HashMap::new();
        let mut seen = HashSet::new();
        for doc in documents {
            seen.clear();
            seen.extend(ngrams(doc, n_range));
            for gram in seen.drain() {
                *document_frequency.entry(gram.to_string()).or_insert(0) += 1;
            }
        }

        let mut ranked: Vec<(String, usize)> = document_frequency.into_iter().collect();
        ranked.sort_by(|(ga, dfa), (gb, dfb)| dfb.cmp(dfa).then_with(|| ga.cmp(gb)));
        ranked.truncate(max_features);

        let n_docs = documents.len();
        let idf = match kind {
            FeaturizerKind::CharTfidf => Some(
                ranked
                    .iter()
                    .map(|(_, df)| smooth_idf(n_docs, *df))
                    .collect(),
            ),
            FeaturizerKind::CharNgram => None,
        };
        let features: Vec<String> = ranked.into_iter().map(|(g, _)| g).collect();
        Ok(FittedFeaturizer {
            kind,
            n_range,
            max_features,
            features,
            idf,
            fitted_on: n_docs,
            index: OnceLock::new(),
        })
    }

    /// Count in-vocabulary n-grams, apply IDF weighting when fitted as
    /// TF-IDF, and L2-normalize. Text with no in-vocabulary content maps to
    /// the zero vector.
    pub fn featurize(&self, text: &str) -> FeatureVector {
        let index = self.index.get_or_init(|| build_index(&self.features));
        let mut values = vec![0.0; self.features.len()];
        for gram in ngrams(text, self.n_range) {
            if let Some(&col) = index.get(gram) {
                values[col] += 1.0;
            }
        }
        if let Some(idf) = &self.idf {
            for (v, w) in values.iter_mut().zip(idf) {
                *v *= w;
            }
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        FeatureVector { values }
    }

    pub fn kind(&self) -> FeaturizerKind {
        self.kind
    }

    /// Number of columns (the encoder input dimension).
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn fitted_on(&self) -> usize {
        self.fitted_on
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn idf(&self) -> Option<&[f64]> {
        self.idf.as_deref()
    }
}

fn build_index(features: &[String]) -> HashMap<String, usize> {
    features
        .iter()
        .enumerate()
        .map(|(i, g)| (g.clone(), i))
        .collect()
}

/// Smoothed inverse document frequency: ln((1 + N) / (1 + df)) + 1.
fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Iterate every character n-gram of `text` for n in `n_range`, yielding
/// borrowed slices on char boundaries.
fn ngrams(text: &str, n_range: (usize, usize)) -> impl Iterator<Item = &str> {
    let boundaries: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let (lo, hi) = n_range;
    (lo..=hi).flat_map(move |n| {
        let boundaries = boundaries.clone();
        (0..boundaries.len().saturating_sub(n)).map(move |i| {
            let start = boundaries[i];
            let end = boundaries[i + n];
            &text[start..end]
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> Vec<String> {
        texts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ngram_fit_matches_enumeration() {
        // Docs "aa", "ab": grams a (df 2), b (df 1), aa (df 1), ab (df 1).
        let f = FittedFeaturizer::fit(FeaturizerKind::CharNgram, &docs(&["aa", "ab"]), 10).unwrap();
        assert_eq!(f.dim(), 4);
        assert_eq!(f.features()[0], "a");
        let rest: Vec<&str> = f.features()[1..].iter().map(String::as_str).collect();
        assert_eq!(rest, vec!["aa", "ab", "b"]); // df ties broken lexicographically
        assert_eq!(f.fitted_on(), 2);
        assert!(f.idf().is_none());
    }

    #[test]
    fn single_document_tfidf_has_unit_idf() {
        let f =
            FittedFeaturizer::fit(FeaturizerKind::CharTfidf, &docs(&["abc"]), 10).unwrap();
        // N = df = 1 for every present char: idf = ln(2/2) + 1 = 1.
        for w in f.idf().unwrap() {
            assert!((w - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn feature_cap_keeps_most_frequent() {
        // 26 single chars; "a" and "b" appear in both docs, rest in one.
        let d1: String = ('a'..='m').collect();
        let d2: String = ('a'..='b').chain('n'..='z').collect();
        let f = FittedFeaturizer::fit(FeaturizerKind::CharTfidf, &docs(&[&d1, &d2]), 5).unwrap();
        assert_eq!(f.dim(), 5);
        assert_eq!(f.features()[0], "a");
        assert_eq!(f.features()[1], "b");
        // Remaining slots: df-1 grams in lexicographic order.
        assert_eq!(f.features()[2..], ["c", "d", "e"]);
    }

    #[test]
    fn empty_document_list_is_an_error() {
        assert!(matches!(
            FittedFeaturizer::fit(FeaturizerKind::CharNgram, &[], 10),
            Err(FeatureError::NoDocuments)
        ));
    }

    #[test]
    fn featurize_counts_and_normalizes() {
        let f = FittedFeaturizer::fit(FeaturizerKind::CharNgram, &docs(&["aa", "ab"]), 10).unwrap();
        let v = f.featurize("aa");
        // vocab column order: a, aa, ab, b -> counts (2, 1, 0, 0) / sqrt(5)
        let s5 = 5.0_f64.sqrt();
        assert!((v.values[0] - 2.0 / s5).abs() < 1e-15);
        assert!((v.values[1] - 1.0 / s5).abs() < 1e-15);
        assert_eq!(v.values[2], 0.0);
        assert_eq!(v.values[3], 0.0);

        let zero = f.featurize("");
        assert!(zero.values.iter().all(|&x| x == 0.0));
        let oov = f.featurize("zzz");
        assert!(oov.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn featurize_is_pure() {
        let f = FittedFeaturizer::fit(FeaturizerKind::CharTfidf, &docs(&["xyz", "xxy"]), 10)
            .unwrap();
        let a = f.featurize("xyzzy");
        let b = f.featurize("xyzzy");
        assert_eq!(a, b);
    }

    #[test]
    fn multibyte_text_is_handled_on_char_boundaries() {
        let f = FittedFeaturizer::fit(
            FeaturizerKind::CharNgram,
            &docs(&["héllo", "wörld"]),
            100,
        )
        .unwrap();
        let v = f.featurize("héö");
        assert!(v.l2_norm() > 0.0);
    }

    proptest! {
        #[test]
        fn fit_is_order_independent(
            mut texts in proptest::collection::vec("[a-d]{0,12}", 1..12),
        ) {
            let forward = FittedFeaturizer::fit(FeaturizerKind::CharNgram, &texts, 50).unwrap();
            texts.reverse();
            let reversed = FittedFeaturizer::fit(FeaturizerKind::CharNgram, &texts, 50).unwrap();
            prop_assert_eq!(forward.features(), reversed.features());
        }

        #[test]
        fn featurize_norm_is_zero_or_one(text in "[a-f ]{0,40}") {
            let f = FittedFeaturizer::fit(
                FeaturizerKind::CharNgram,
                &docs(&["abc def", "fed cba"]),
                100,
            ).unwrap();
            let norm = f.featurize(&text).l2_norm();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
        }
    }
}
