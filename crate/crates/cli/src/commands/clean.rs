use std::path::PathBuf;

use authormatch::corpus::Repr;
use authormatch::repr::{apply_rule, strip_comments, CleaningRule, CommentStyle};
use clap::Args;
use serde::Deserialize;

use crate::config::{pick_required, FileConfig};
use crate::error::{usage, CliError};

#[derive(Args)]
pub struct CleanArgs {
    /// Input corpus (JSON lines).
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Output corpus path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated rules: hex, comments.
    #[arg(long)]
    pub rules: Option<String>,
    /// Accepted for interface uniformity; cleaning is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanFileConfig {
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    rules: Option<String>,
    #[allow(dead_code)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RuleChoice {
    Hex,
    Comments,
}

fn parse_rules(spec: &str) -> Result<Vec<RuleChoice>, CliError> {
    let mut rules = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "hex" => rules.push(RuleChoice::Hex),
            "comments" => rules.push(RuleChoice::Comments),
            other => return Err(usage(format!("unknown cleaning rule {other:?}"))),
        }
    }
    if rules.is_empty() {
        return Err(usage("--rules must name at least one rule"));
    }
    Ok(rules)
}

/// Which raw representation each rule targets, and the field it writes.
fn targets(rule: RuleChoice) -> &'static [(Repr, Repr)] {
    match rule {
        RuleChoice::Hex => &[
            (Repr::Asm, Repr::AsmClean),
            (Repr::Pcode, Repr::PcodeClean),
            (Repr::Pcode2, Repr::Pcode2Clean),
        ],
        RuleChoice::Comments => &[
            (Repr::Source, Repr::SourceClean),
            (Repr::Decompiled, Repr::DecompiledClean),
        ],
    }
}

pub fn run(args: CleanArgs, config: &FileConfig) -> Result<(), CliError> {
    let file: CleanFileConfig = config.section("clean")?;
    let input = pick_required(args.input, file.input, "in")?;
    let out = pick_required(args.out, file.out, "out")?;
    let rules = parse_rules(&pick_required(args.rules, file.rules, "rules")?)?;

    let samples = super::load_corpus_file(&input)?;
    let mut output = String::new();
    for mut sample in samples {
        for &rule in &rules {
            for &(raw, clean) in targets(rule) {
                let Some(text) = sample.repr_text(raw).map(str::to_string) else {
                    continue;
                };
                let outcome = match rule {
                    RuleChoice::Hex => apply_rule(CleaningRule::HexToHexstr, &text),
                    RuleChoice::Comments => strip_comments(&text, CommentStyle::CLike),
                };
                for warning in &outcome.warnings {
                    eprintln!("warning: {} {raw}: {warning}", sample.function_id);
                }
                sample.reprs.insert(clean, outcome.text);
            }
        }
        output.push_str(&serde_json::to_string(&sample).expect("sample serializes"));
        output.push('\n');
    }
    authormatch::write_atomic(&out, output.as_bytes())
        .map_err(|e| CliError::Data(anyhow::anyhow!("writing {}: {e}", out.display())))?;
    Ok(())
}
