//! Tokenization and summary statistics over collections, topics, and qrels.

use std::collections::HashSet;

use super::{CollectionError, CollectionStats, Document, GradeDistribution, Qrel, QueryStats, Topic};

/// Split text into tokens: maximal runs of Unicode letters or digits.
/// Punctuation and special characters separate tokens and never appear
/// in them, so hyphens and apostrophes split words.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Token and byte statistics over a document list. Token counts are
/// case-sensitive; order of documents does not matter.
pub fn collection_stats(docs: &[Document]) -> CollectionStats {
    let mut total_tokens = 0u64;
    let mut total_text_only = 0u64;
    let mut size_bytes = 0u64;
    let mut distinct: HashSet<&str> = HashSet::new();
    let mut distinct_text_only: HashSet<&str> = HashSet::new();

    for doc in docs {
        let text_tokens = tokenize(&doc.text);
        total_tokens += text_tokens.len() as u64;
        total_text_only += text_tokens.len() as u64;
        size_bytes += doc.text.len() as u64;
        for t in text_tokens {
            distinct.insert(t);
            distinct_text_only.insert(t);
        }
        if let Some(title) = &doc.title {
            let title_tokens = tokenize(title);
            total_tokens += title_tokens.len() as u64;
            size_bytes += title.len() as u64;
            for t in title_tokens {
                distinct.insert(t);
            }
        }
    }

    CollectionStats {
        num_documents: docs.len() as u64,
        total_tokens,
        distinct_tokens: distinct.len() as u64,
        size_bytes,
        total_tokens_text_only: total_text_only,
        distinct_tokens_text_only: distinct_text_only.len() as u64,
    }
}

/// Word-count statistics over topics, words counted via [`tokenize`].
pub fn query_stats(topics: &[Topic]) -> Result<QueryStats, CollectionError> {
    if topics.is_empty() {
        return Err(CollectionError::EmptyTopics);
    }
    let counts: Vec<u64> = topics.iter().map(|t| tokenize(&t.text).len() as u64).collect();
    let total: u64 = counts.iter().sum();
    Ok(QueryStats {
        num_queries: topics.len() as u64,
        min_words: *counts.iter().min().unwrap(),
        max_words: *counts.iter().max().unwrap(),
        avg_words: total as f64 / topics.len() as f64,
    })
}

/// Count of each grade over a non-empty qrels set, with proportions.
pub fn grade_distribution(qrels: &[Qrel]) -> Result<GradeDistribution, CollectionError> {
    if qrels.is_empty() {
        return Err(CollectionError::EmptyQrels);
    }
    let mut counts = [0u64; 4];
    for q in qrels {
        counts[q.grade.value() as usize] += 1;
    }
    let total = qrels.len() as u64;
    let proportions = counts.map(|c| c as f64 / total as f64);
    Ok(GradeDistribution {
        counts,
        total,
        proportions,
    })
}
