//! Synthetic corpus generation for end-to-end tests: each author is a
//! distinct token distribution ("style") over a shared assembly-like
//! vocabulary, so a character-n-gram pipeline has a real stylistic signal
//! to learn without any author-identifying tokens.

use std::collections::BTreeMap;

use authormatch::corpus::{AuthorShare, FunctionSample, Repr};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MNEMONIC_BASES: [&str; 32] = [
    "LOD", "STR", "ADD", "SUB", "MUL", "DIV", "AND", "ORR", "XOR", "SHL", "SHR", "CMP", "TST",
    "JMP", "JEQ", "JNE", "CAL", "RET", "PSH", "POP", "MOV", "LEA", "INC", "DEC", "NEG", "NOT",
    "ROL", "ROR", "SWP", "BRK", "FMA", "SQT",
];
const SUFFIXES: [&str; 4] = ["B", "W", "L", "Q"];

/// One author's sampling preferences.
pub struct AuthorStyle {
    mnemonic_weights: Vec<f64>,
    suffix_weights: Vec<f64>,
    register_weights: Vec<f64>,
    immediate_rate: f64,
    two_operand_rate: f64,
}

impl AuthorStyle {
    /// Deterministic style for (corpus_seed, author_index).
    pub fn new(corpus_seed: u64, author_index: u64) -> AuthorStyle {
        let mut rng = ChaCha8Rng::seed_from_u64(
            corpus_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ author_index,
        );
        let favor = |rng: &mut ChaCha8Rng, len: usize, favored: usize, boost: f64| {
            let mut weights = vec![1.0; len];
            for i in index::sample(rng, len, favored) {
                weights[i] = boost;
            }
            weights
        };
        AuthorStyle {
            mnemonic_weights: favor(&mut rng, MNEMONIC_BASES.len(), 8, 9.0),
            suffix_weights: favor(&mut rng, SUFFIXES.len(), 1, 7.0),
            register_weights: favor(&mut rng, 16, 5, 6.0),
            immediate_rate: rng.gen_range(0.05..0.45),
            two_operand_rate: rng.gen_range(0.55..0.95),
        }
    }

    /// One assembly-like instruction line in this style.
    pub fn line(&self, rng: &mut ChaCha8Rng) -> String {
        let mnemonic = WeightedIndex::new(&self.mnemonic_weights)
            .unwrap()
            .sample(rng);
        let suffix = WeightedIndex::new(&self.suffix_weights).unwrap().sample(rng);
        let reg_dist = WeightedIndex::new(&self.register_weights).unwrap();
        let dst = reg_dist.sample(rng);
        let mut line = format!("{}{} R{}", MNEMONIC_BASES[mnemonic], SUFFIXES[suffix], dst);
        if rng.gen_bool(self.two_operand_rate) {
            if rng.gen_bool(self.immediate_rate) {
                line.push_str(&format!(",#{}", rng.gen_range(0..10)));
            } else {
                line.push_str(&format!(",R{}", reg_dist.sample(rng)));
            }
        }
        line
    }

    /// A function body of `lines` instructions.
    pub fn function_text(&self, rng: &mut ChaCha8Rng, lines: usize) -> String {
        let mut out = String::new();
        for _ in 0..lines {
            out.push_str(&self.line(rng));
            out.push('\n');
        }
        out
    }

    /// Replace `replace` randomly chosen lines with freshly sampled ones,
    /// simulating a small in-style edit.
    pub fn mutate_text(&self, text: &str, rng: &mut ChaCha8Rng, replace: usize) -> String {
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let picks = index::sample(rng, lines.len(), replace.min(lines.len()));
        for i in picks {
            lines[i] = self.line(rng);
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

pub struct CorpusSpec {
    pub authors: usize,
    pub functions_per_author: usize,
    pub binaries: usize,
    pub min_lines: usize,
    pub max_lines: usize,
    pub seed: u64,
}

/// Generate a single-owner synthetic corpus: authors x functions spread
/// round-robin over binaries, each function written in its author's style.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<FunctionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.authors * spec.functions_per_author);
    for author in 0..spec.authors {
        let style = AuthorStyle::new(spec.seed, author as u64);
        for i in 0..spec.functions_per_author {
            let lines = rng.gen_range(spec.min_lines..=spec.max_lines);
            let text = style.function_text(&mut rng, lines);
            samples.push(FunctionSample {
                function_id: format!("a{author:02}_f{i:03}"),
                project: "synthetic".into(),
                binary_id: format!("bin{}", i % spec.binaries),
                function_name: format!("a{author:02}_f{i:03}"),
                authors: vec![AuthorShare {
                    name: format!("author{author:02}"),
                    share: 1.0,
                }],
                reprs: BTreeMap::from([(Repr::Asm, text)]),
            });
        }
    }
    samples
}

/// Render samples as a JSON-lines corpus file body.
#[allow(dead_code)] // not every test target uses the file form
pub fn to_jsonl(samples: &[FunctionSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).unwrap());
        out.push('\n');
    }
    out
}
