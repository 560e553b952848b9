//! Data model for prompts, responses, and selected preference pairs,
//! plus ingestion/emission of the line-delimited JSON record files.
//!
//! Input corpus format (one object per line):
//!
//! ```json
//! {"id": "p1", "question": "...", "gold_answer": "4",
//!  "responses": [{"text": "...", "tokens": ["a", 7], "logprobs": [-0.1, -2.3], "answer": "4"}]}
//! ```
//!
//! Tokens are opaque identifiers compared by equality only; strings and
//! integers are both accepted and never coerced into each other. Token
//! sequences must cover the response text only, with no prompt-template
//! tokens included. Log-probabilities are natural-log, with a slack of
//! `1e-9` above zero to absorb upstream rounding.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on a log-probability; tiny positive slack for rounding.
pub const LOGPROB_SLACK: f64 = 1e-9;

/// Opaque, equality-comparable token identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Token {
    Int(i64),
    Str(String),
}

/// One generated response: full text, its token sequence, and one
/// natural-log probability per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub text: String,
    pub tokens: Vec<Token>,
    pub logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// One math problem with its gold answer and N generated responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub responses: Vec<ResponseRecord>,
}

/// A final preference pair with its pair-weighted score and origin details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPair {
    pub prompt_id: String,
    pub question: String,
    pub chosen: ResponseRecord,
    pub rejected: ResponseRecord,
    pub s_w: f64,
    pub matched_token_count: usize,
    pub levenshtein_distance: usize,
    pub levenshtein_rank: usize,
}

/// One violated invariant: which field, and what went wrong.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Result of validating one record; violations are data, not failures.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every invariant of `PromptRecord` and its responses.
pub fn validate_record(record: &PromptRecord) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |field: &str, message: String| {
        violations.push(Violation {
            field: field.to_string(),
            message,
        });
    };

    if record.id.is_empty() {
        push("id", "id empty".to_string());
    }
    if record.responses.is_empty() {
        push("responses", "responses empty".to_string());
    }
    for (i, resp) in record.responses.iter().enumerate() {
        if resp.tokens.is_empty() {
            push(&format!("responses[{i}].tokens"), "tokens empty".to_string());
        }
        if resp.tokens.len() != resp.logprobs.len() {
            push(
                &format!("responses[{i}]"),
                format!(
                    "length mismatch: {} tokens vs {} logprobs",
                    resp.tokens.len(),
                    resp.logprobs.len()
                ),
            );
        }
        for (t, &lp) in resp.logprobs.iter().enumerate() {
            if !lp.is_finite() {
                push(
                    &format!("responses[{i}].logprobs[{t}]"),
                    "logprob not finite".to_string(),
                );
            } else if lp > LOGPROB_SLACK {
                push(
                    &format!("responses[{i}].logprobs[{t}]"),
                    format!("logprob above bound: {lp}"),
                );
            }
        }
    }
    ValidationReport { violations }
}

/// Parses a line-delimited corpus, in file order, validating every record.
///
/// Malformed lines error with the 1-based line number; schema violations
/// error with the record id and the offending field. Records are never
/// deduplicated, but duplicate ids are rejected.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<PromptRecord>> {
    let mut records: Vec<PromptRecord> = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PromptRecord =
            serde_json::from_str(&line).map_err(|source| Error::MalformedLine {
                line: idx + 1,
                source,
            })?;
        let report = validate_record(&record);
        if !report.ok() {
            let message = report
                .violations
                .iter()
                .map(Violation::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::Schema {
                id: record.id.clone(),
                message,
            });
        }
        if !seen_ids.insert(record.id.clone()) {
            return Err(Error::Schema {
                id: record.id.clone(),
                message: "id: duplicate id within corpus".to_string(),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Wire form of `SelectedPair` with the score emitted as a raw JSON
/// number carrying 17 significant digits, enough for an exact f64
/// round trip.
#[derive(Serialize)]
struct SelectedPairWire<'a> {
    prompt_id: &'a str,
    question: &'a str,
    chosen: &'a ResponseRecord,
    rejected: &'a ResponseRecord,
    s_w: &'a serde_json::value::RawValue,
    matched_token_count: usize,
    levenshtein_distance: usize,
    levenshtein_rank: usize,
}

/// Writes one JSON object per line, in input order. Returns the count
/// written; a sink failure reports how many lines made it out.
pub fn write_pairs<W: Write>(pairs: &[SelectedPair], mut sink: W) -> Result<usize> {
    let mut written = 0usize;
    for pair in pairs {
        let s_w_raw = serde_json::value::RawValue::from_string(format!("{:.16e}", pair.s_w))
            .map_err(|e| Error::Internal(format!("score serialization: {e}")))?;
        let wire = SelectedPairWire {
            prompt_id: &pair.prompt_id,
            question: &pair.question,
            chosen: &pair.chosen,
            rejected: &pair.rejected,
            s_w: &s_w_raw,
            matched_token_count: pair.matched_token_count,
            levenshtein_distance: pair.levenshtein_distance,
            levenshtein_rank: pair.levenshtein_rank,
        };
        let line = serde_json::to_string(&wire)
            .map_err(|e| Error::Internal(format!("pair serialization: {e}")))?;
        sink.write_all(line.as_bytes())
            .and_then(|_| sink.write_all(b"\n"))
            .map_err(|source| Error::PartialWrite { written, source })?;
        written += 1;
    }
    sink.flush()
        .map_err(|source| Error::PartialWrite { written, source })?;
    Ok(written)
}

/// Parses a line-delimited selected-pair file, validating score bounds.
pub fn parse_pairs<R: BufRead>(reader: R) -> Result<Vec<SelectedPair>> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: SelectedPair =
            serde_json::from_str(&line).map_err(|source| Error::MalformedLine {
                line: idx + 1,
                source,
            })?;
        validate_pair(&pair)?;
        pairs.push(pair);
    }
    Ok(pairs)
}

fn validate_pair(pair: &SelectedPair) -> Result<()> {
    let schema = |message: String| Error::Schema {
        id: pair.prompt_id.clone(),
        message,
    };
    if !(0.0..=1.0).contains(&pair.s_w) {
        return Err(schema(format!("s_w out of [0,1]: {}", pair.s_w)));
    }
    if pair.rejected.tokens.is_empty() {
        return Err(schema("rejected.tokens: tokens empty".to_string()));
    }
    let bound = pair.matched_token_count as f64 / pair.rejected.tokens.len() as f64;
    if pair.s_w > bound + 1e-9 {
        return Err(schema(format!(
            "s_w {} exceeds matched_token_count/len bound {bound}",
            pair.s_w
        )));
    }
    if pair.levenshtein_rank == 0 {
        return Err(schema("levenshtein_rank: must be positive".to_string()));
    }
    Ok(())
}
