//! Extraction of the mandated `{"reason": …, "score": …}` verdict from
//! model output that may wrap it in prose or code fences.

use serde_json::Value;
use thiserror::Error;

use crate::collection::RelevanceGrade;

/// A model's verdict for one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedJudgment {
    pub reason: String,
    pub score: RelevanceGrade,
}

/// Each variant is a distinct failure kind so retry accounting can tell
/// them apart.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseJudgmentError {
    #[error("no JSON object found in response")]
    NoJsonObject,
    #[error("verdict object is missing field {0:?}")]
    MissingField(&'static str),
    #[error("field {field:?} has the wrong type: {detail}")]
    IllTyped { field: &'static str, detail: String },
    #[error("score {0} outside the 0-3 grade range")]
    ScoreOutOfRange(i64),
    #[error("reason must be a non-empty string")]
    EmptyReason,
}

/// Find the end (exclusive) of the balanced object starting at `start`,
/// respecting JSON string and escape rules. None if it never closes.
fn balanced_object_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Locate the first balanced `{…}` region that parses as a JSON object.
fn first_json_object(text: &str) -> Option<Value> {
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find('{') {
        let start = search_from + rel;
        if let Some(end) = balanced_object_end(text, start) {
            if let Ok(value) = serde_json::from_str::<Value>(&text[start..end]) {
                if value.is_object() {
                    return Some(value);
                }
            }
        }
        search_from = start + 1;
    }
    None
}

fn extract_score(value: &Value) -> Result<RelevanceGrade, ParseJudgmentError> {
    let raw = value.get("score").ok_or(ParseJudgmentError::MissingField("score"))?;
    let score: i64 = match raw {
        Value::Number(n) => n.as_i64().ok_or_else(|| ParseJudgmentError::IllTyped {
            field: "score",
            detail: format!("{n} is not an integer"),
        })?,
        Value::String(s) => s.trim().parse().map_err(|_| ParseJudgmentError::IllTyped {
            field: "score",
            detail: format!("{s:?} is not an integer"),
        })?,
        other => {
            return Err(ParseJudgmentError::IllTyped {
                field: "score",
                detail: format!("expected integer, got {other}"),
            })
        }
    };
    RelevanceGrade::from_value(score).map_err(|_| ParseJudgmentError::ScoreOutOfRange(score))
}

/// Parse a model reply into a verdict.
///
/// Scans for the first balanced JSON object (prose and code fences around
/// it are fine), then requires a non-empty string `reason` and an integer
/// or integer-string `score` in 0-3. Scores given as strings are coerced;
/// fractional scores are rejected.
pub fn parse_judgment(text: &str) -> Result<ParsedJudgment, ParseJudgmentError> {
    let value = first_json_object(text).ok_or(ParseJudgmentError::NoJsonObject)?;

    let reason = match value.get("reason") {
        None => return Err(ParseJudgmentError::MissingField("reason")),
        Some(Value::String(s)) => s.clone(),
        Some(other) => {
            return Err(ParseJudgmentError::IllTyped {
                field: "reason",
                detail: format!("expected string, got {other}"),
            })
        }
    };
    if reason.trim().is_empty() {
        return Err(ParseJudgmentError::EmptyReason);
    }

    let score = extract_score(&value)?;
    Ok(ParsedJudgment { reason, score })
}
