//! Cleaning transforms that remove author-irrelevant noise from
//! representation text: hex literals (addresses, offsets, immediates) and
//! source comments. Every transform is pure and idempotent.

use serde::{Deserialize, Serialize};

/// A single cleaning transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleaningRule {
    /// Replace `0x<hexdigits>` literals with the fixed string `HEXSTR`.
    HexToHexstr,
    /// Remove `//` comments to end of line.
    StripLineComments,
    /// Remove `/* ... */` comment spans (non-nesting).
    StripBlockComments,
}

/// Comment syntax family understood by [`strip_comments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommentStyle {
    CLike,
}

/// Cleaned text plus any warnings produced along the way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanOutcome {
    pub text: String,
    pub warnings: Vec<String>,
}

impl CleanOutcome {
    fn clean(text: String) -> Self {
        CleanOutcome {
            text,
            warnings: Vec::new(),
        }
    }
}

/// Apply one cleaning rule.
pub fn apply_rule(rule: CleaningRule, text: &str) -> CleanOutcome {
    match rule {
        CleaningRule::HexToHexstr => CleanOutcome::clean(clean_hex(text)),
        CleaningRule::StripLineComments => strip_to_fixed_point(text, true, false),
        CleaningRule::StripBlockComments => strip_to_fixed_point(text, false, true),
    }
}

// A single-rule pass can expose a marker the other rule would have caught
// (e.g. block removal in `a//*c*/*b` leaves `a/*b`), so single rules loop
// until stable. Each productive pass strictly shrinks the text.
fn strip_to_fixed_point(text: &str, strip_line: bool, strip_block: bool) -> CleanOutcome {
    let mut current = strip_comments_inner(text, strip_line, strip_block);
    loop {
        let next = strip_comments_inner(&current.text, strip_line, strip_block);
        if next.text == current.text {
            return current;
        }
        for w in next.warnings {
            if !current.warnings.contains(&w) {
                current.warnings.push(w);
            }
        }
        current.text = next.text;
    }
}

/// Replace every maximal `0x[0-9a-fA-F]+` substring with `HEXSTR`. No
/// whitespace is added or removed, so token count is preserved.
pub fn clean_hex(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'0'
            && bytes.get(i + 1) == Some(&b'x')
            && bytes.get(i + 2).is_some_and(|b| b.is_ascii_hexdigit())
        {
            let mut j = i + 2;
            while j < bytes.len() && bytes[j].is_ascii_hexdigit() {
                j += 1;
            }
            out.push_str("HEXSTR");
            i = j;
        } else {
            // Multi-byte UTF-8 sequences never start with an ASCII byte, so
            // advancing by the char length keeps boundaries intact.
            let ch = text[i..].chars().next().expect("in-bounds char");
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    out
}

/// Remove C-style comments outside string and character literals. Lines
/// that become blank through comment removal are dropped; lines that lost
/// a trailing comment are right-trimmed. An unterminated block comment is
/// stripped to the end of text and reported as a warning.
pub fn strip_comments(text: &str, style: CommentStyle) -> CleanOutcome {
    match style {
        CommentStyle::CLike => strip_comments_inner(text, true, true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    DoubleQuote,
    SingleQuote,
    LineComment,
    BlockComment,
}

fn strip_comments_inner(text: &str, strip_line: bool, strip_block: bool) -> CleanOutcome {
    let mut out = String::with_capacity(text.len());
    let mut state = State::Code;
    let mut escaped = false;
    // Output line indices where at least one comment was removed.
    let mut changed_lines: Vec<usize> = Vec::new();
    let mut current_line = 0usize;
    let mut warnings = Vec::new();

    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match state {
            State::Code => match c {
                '/' if strip_line && chars.peek() == Some(&'/') => {
                    chars.next();
                    state = State::LineComment;
                    changed_lines.push(current_line);
                }
                '/' if strip_block && chars.peek() == Some(&'*') => {
                    chars.next();
                    state = State::BlockComment;
                    changed_lines.push(current_line);
                }
                '"' => {
                    state = State::DoubleQuote;
                    out.push(c);
                }
                '\'' => {
                    state = State::SingleQuote;
                    out.push(c);
                }
                _ => {
                    if c == '\n' {
                        current_line += 1;
                    }
                    out.push(c);
                }
            },
            State::DoubleQuote | State::SingleQuote => {
                if c == '\n' {
                    current_line += 1;
                }
                out.push(c);
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if (state == State::DoubleQuote && c == '"')
                    || (state == State::SingleQuote && c == '\'')
                {
                    state = State::Code;
                }
            }
            State::LineComment => {
                if c == '\n' {
                    out.push(c);
                    current_line += 1;
                    state = State::Code;
                }
            }
            State::BlockComment => {
                if c == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    state = State::Code;
                }
            }
        }
    }
    if state == State::BlockComment {
        warnings.push("unterminated block comment stripped to end of text".to_string());
    }

    if changed_lines.is_empty() {
        return CleanOutcome {
            text: out,
            warnings,
        };
    }

    let mut result = String::with_capacity(out.len());
    for (idx, segment) in out.split_inclusive('\n').enumerate() {
        let (content, newline) = match segment.strip_suffix('\n') {
            Some(c) => (c, "\n"),
            None => (segment, ""),
        };
        if changed_lines.contains(&idx) {
            let trimmed = content.trim_end();
            if trimmed.is_empty() {
                continue; // line became blank: drop it and its newline
            }
            result.push_str(trimmed);
            result.push_str(newline);
        } else {
            result.push_str(content);
            result.push_str(newline);
        }
    }
    CleanOutcome {
        text: result,
        warnings,
    }
}
