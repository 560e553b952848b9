//! Final-answer extraction, normalization, equality, and the
//! correct/incorrect partition of a prompt's responses.
//!
//! Extraction takes the content of the last balanced `boxed{...}` in the
//! response text. Normalization applies a small fixed rule set (strip
//! surrounding whitespace, `$`, `\left`/`\right` markers, one trailing
//! `.`, collapse internal whitespace) iterated to a fixpoint; the full
//! zoo of LaTeX answer formats is out of scope. Equality is numeric
//! within a relative tolerance when both sides parse under the numeric
//! grammar, else byte equality of the normalized strings. No
//! computer-algebra equivalence is attempted.

use serde::{Deserialize, Serialize};

use crate::corpus::{PromptRecord, ResponseRecord};

/// Marker introducing the final answer in response text.
pub const BOXED_MARKER: &str = "boxed{";

/// Relative tolerance for numeric answer equality.
pub const NUMERIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NumericKind {
    Integer,
    Decimal,
    Fraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numeric {
    pub value: f64,
    pub kind: NumericKind,
}

/// An extracted answer in raw, normalized, and (when parseable) numeric form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub raw: String,
    pub normalized: String,
    pub numeric: Option<Numeric>,
}

/// Correct/incorrect split of a prompt's responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Indices of responses whose answer matches the gold answer.
    pub winners: Vec<usize>,
    /// Indices of the remaining responses.
    pub losers: Vec<usize>,
}

impl Partition {
    pub fn p(&self) -> usize {
        self.winners.len()
    }

    pub fn q(&self) -> usize {
        self.losers.len()
    }
}

/// Returns the content of the last balanced `boxed{...}` occurrence, or
/// `None` when absent or unbalanced.
pub fn extract_answer(text: &str) -> Option<String> {
    let start = text.rfind(BOXED_MARKER)? + BOXED_MARKER.len();
    let mut depth = 1usize;
    for (i, c) in text[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(text[start..start + i].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

fn normalize_pass(s: &str) -> String {
    let mut out = s.trim().to_string();
    if let Some(stripped) = out.strip_suffix('.') {
        out = stripped.to_string();
    }
    out = out.trim().to_string();
    if let Some(stripped) = out.strip_prefix('$') {
        out = stripped.to_string();
    }
    if let Some(stripped) = out.strip_suffix('$') {
        out = stripped.to_string();
    }
    out = out.replace("\\left", "").replace("\\right", "");
    // collapse internal whitespace runs to a single space
    out = out.split_whitespace().collect::<Vec<_>>().join(" ");
    out
}

/// Normalizes raw answer text and parses it under the numeric grammar.
/// Total and idempotent: the rule set is iterated to a fixpoint.
pub fn normalize_answer(raw: &str) -> Answer {
    let mut normalized = raw.to_string();
    loop {
        let next = normalize_pass(&normalized);
        if next == normalized {
            break;
        }
        normalized = next;
    }
    let numeric = parse_numeric(&normalized);
    Answer {
        raw: raw.to_string(),
        normalized,
        numeric,
    }
}

fn parse_unsigned_integer(s: &str) -> Option<()> {
    (!s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())).then_some(())
}

fn strip_sign(s: &str) -> &str {
    s.strip_prefix(['+', '-']).unwrap_or(s)
}

/// Numeric grammar: optional sign then digits with an optional decimal
/// point, or `a/b` with integer `a`, `b` and `b != 0`.
fn parse_numeric(s: &str) -> Option<Numeric> {
    if let Some((num, den)) = s.split_once('/') {
        parse_unsigned_integer(strip_sign(num))?;
        parse_unsigned_integer(strip_sign(den))?;
        let den_value: f64 = den.parse().ok()?;
        if den_value == 0.0 {
            return None;
        }
        let num_value: f64 = num.parse().ok()?;
        return Some(Numeric {
            value: num_value / den_value,
            kind: NumericKind::Fraction,
        });
    }
    let digits = strip_sign(s);
    if digits.is_empty() {
        return None;
    }
    let kind = match digits.split_once('.') {
        None => {
            parse_unsigned_integer(digits)?;
            NumericKind::Integer
        }
        Some((int_part, frac_part)) => {
            // at least one digit overall; both sides digit-only
            if int_part.is_empty() && frac_part.is_empty() {
                return None;
            }
            if !int_part.bytes().all(|b| b.is_ascii_digit())
                || !frac_part.bytes().all(|b| b.is_ascii_digit())
            {
                return None;
            }
            NumericKind::Decimal
        }
    };
    let value: f64 = s.parse().ok()?;
    Some(Numeric { value, kind })
}

/// Equality on normalized answers: numeric within relative tolerance
/// when both parse, otherwise byte equality of the normalized strings.
pub fn answers_equal(a: &Answer, b: &Answer) -> bool {
    if let (Some(na), Some(nb)) = (&a.numeric, &b.numeric) {
        let scale = 1.0f64.max(na.value.abs()).max(nb.value.abs());
        if (na.value - nb.value).abs() <= NUMERIC_TOLERANCE * scale {
            return true;
        }
    }
    a.normalized == b.normalized
}

fn response_answer(resp: &ResponseRecord) -> Option<Answer> {
    // a pre-extracted answer field takes precedence over text extraction
    match &resp.answer {
        Some(pre) => Some(normalize_answer(pre)),
        None => extract_answer(&resp.text).map(|raw| normalize_answer(&raw)),
    }
}

/// Splits a prompt's responses into winners (answer equals gold) and
/// losers; responses without an extractable answer are losers.
pub fn partition_responses(record: &PromptRecord) -> Partition {
    let gold = normalize_answer(&record.gold_answer);
    let mut winners = Vec::new();
    let mut losers = Vec::new();
    for (i, resp) in record.responses.iter().enumerate() {
        match response_answer(resp) {
            Some(answer) if answers_equal(&answer, &gold) => winners.push(i),
            _ => losers.push(i),
        }
    }
    Partition { winners, losers }
}
