//! TREC-style test collections: documents, topics, and graded qrels.

mod io;
mod qrels;
mod stats;

pub use io::{read_corpus, read_qrels, read_topics, parse_corpus, parse_topics};
pub use qrels::{parse_qrels, serialize_qrels};
pub use stats::{collection_stats, grade_distribution, query_stats, tokenize};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CollectionError {
    #[error("qrels line {line}: {msg}")]
    QrelsParse { line: usize, msg: String },
    #[error("topics line {line}: {msg}")]
    TopicsParse { line: usize, msg: String },
    #[error("corpus line {line}: {msg}")]
    CorpusParse { line: usize, msg: String },
    #[error("duplicate doc_id {0:?} in corpus")]
    DuplicateDocId(String),
    #[error("invalid relevance grade {0}, expected 0-3")]
    InvalidGrade(i64),
    #[error("invalid {field}: {msg}")]
    InvalidField { field: &'static str, msg: String },
    #[error("empty topic list")]
    EmptyTopics,
    #[error("empty qrels")]
    EmptyQrels,
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Four-level graded topical relevance label shared by humans and models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum RelevanceGrade {
    Irrelevant = 0,
    MarginallyRelevant = 1,
    Relevant = 2,
    HighlyRelevant = 3,
}

impl RelevanceGrade {
    pub const ALL: [RelevanceGrade; 4] = [
        RelevanceGrade::Irrelevant,
        RelevanceGrade::MarginallyRelevant,
        RelevanceGrade::Relevant,
        RelevanceGrade::HighlyRelevant,
    ];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(value: i64) -> Result<Self, CollectionError> {
        match value {
            0 => Ok(RelevanceGrade::Irrelevant),
            1 => Ok(RelevanceGrade::MarginallyRelevant),
            2 => Ok(RelevanceGrade::Relevant),
            3 => Ok(RelevanceGrade::HighlyRelevant),
            other => Err(CollectionError::InvalidGrade(other)),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RelevanceGrade::Irrelevant => "irrelevant",
            RelevanceGrade::MarginallyRelevant => "marginally relevant",
            RelevanceGrade::Relevant => "relevant",
            RelevanceGrade::HighlyRelevant => "highly relevant",
        }
    }
}

impl TryFrom<u8> for RelevanceGrade {
    type Error = CollectionError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        RelevanceGrade::from_value(i64::from(value))
    }
}

impl From<RelevanceGrade> for u8 {
    fn from(grade: RelevanceGrade) -> u8 {
        grade.value()
    }
}

impl std::fmt::Display for RelevanceGrade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value())
    }
}

fn validate_id(field: &'static str, id: &str) -> Result<(), CollectionError> {
    if id.is_empty() {
        return Err(CollectionError::InvalidField {
            field,
            msg: "must be non-empty".into(),
        });
    }
    if id.chars().any(char::is_whitespace) {
        return Err(CollectionError::InvalidField {
            field,
            msg: format!("{id:?} contains whitespace"),
        });
    }
    Ok(())
}

/// A document in the corpus. `doc_id` is unique within a collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        title: Option<String>,
        text: impl Into<String>,
    ) -> Result<Self, CollectionError> {
        let doc_id = doc_id.into();
        validate_id("doc_id", &doc_id)?;
        Ok(Document {
            doc_id,
            title,
            text: text.into(),
        })
    }
}

/// A topic (query) to judge documents against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub query_id: String,
    pub text: String,
}

impl Topic {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Result<Self, CollectionError> {
        let query_id = query_id.into();
        validate_id("query_id", &query_id)?;
        let text = text.into();
        if text.is_empty() {
            return Err(CollectionError::InvalidField {
                field: "topic text",
                msg: "must be non-empty".into(),
            });
        }
        Ok(Topic { query_id, text })
    }
}

/// One relevance judgment: an annotator's grade for a (query, document) pair.
///
/// The consolidated human label uses annotator_id `"gold"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrel {
    pub query_id: String,
    pub doc_id: String,
    pub annotator_id: String,
    pub grade: RelevanceGrade,
}

pub const GOLD_ANNOTATOR: &str = "gold";

/// Corpus-level token and size statistics.
///
/// `total_tokens`/`distinct_tokens` count document text plus titles;
/// the `*_text_only` variants ignore titles, since it is ambiguous
/// whether headline material belongs to the body of a collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CollectionStats {
    pub num_documents: u64,
    pub total_tokens: u64,
    pub distinct_tokens: u64,
    pub size_bytes: u64,
    pub total_tokens_text_only: u64,
    pub distinct_tokens_text_only: u64,
}

/// Word-count statistics over the topic set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryStats {
    pub num_queries: u64,
    pub min_words: u64,
    pub max_words: u64,
    pub avg_words: f64,
}

/// Per-grade counts and proportions over a qrels set.
///
/// `counts` and `proportions` are indexed by grade value 0..=3.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradeDistribution {
    pub counts: [u64; 4],
    pub total: u64,
    pub proportions: [f64; 4],
}

impl GradeDistribution {
    pub fn count(&self, grade: RelevanceGrade) -> u64 {
        self.counts[grade.value() as usize]
    }

    pub fn proportion(&self, grade: RelevanceGrade) -> f64 {
        self.proportions[grade.value() as usize]
    }

    /// Proportion of `grade` as a percentage rounded for display, e.g. "11.64%".
    pub fn percentage(&self, grade: RelevanceGrade) -> String {
        format!("{:.2}%", self.proportion(grade) * 100.0)
    }
}
