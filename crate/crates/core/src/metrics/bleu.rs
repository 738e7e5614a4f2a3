//! BLEU: clipped modified n-gram precision with a brevity penalty.

use std::collections::HashMap;

use serde::Serialize;

use super::MetricsError;
use crate::collection::tokenize;

pub const DEFAULT_MAX_N: usize = 4;

/// BLEU score with its components. `precisions[i]` is the modified
/// (i+1)-gram precision; `reference_length` is the effective reference
/// length (closest to the candidate, per sentence, summed at corpus level).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuResult {
    pub score: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub candidate_length: u64,
    pub reference_length: u64,
}

/// Lowercase and tokenize text for BLEU n-gram extraction.
pub fn bleu_tokenize(text: &str) -> Vec<String> {
    tokenize(&text.to_lowercase())
        .into_iter()
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped match count and total candidate n-gram count at order `n`.
fn clipped_counts(candidate: &[String], references: &[&Vec<String>], n: usize) -> (u64, u64) {
    let cand = ngram_counts(candidate, n);
    let total: u64 = cand.values().sum();
    let mut max_ref: HashMap<&[String], u64> = HashMap::new();
    for reference in references {
        for (gram, count) in ngram_counts(reference, n) {
            let entry = max_ref.entry(gram).or_insert(0);
            *entry = (*entry).max(count);
        }
    }
    let matched = cand
        .iter()
        .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// Reference length closest to the candidate length; ties go to the
/// shorter reference.
fn closest_reference_length(candidate_len: usize, references: &[&Vec<String>]) -> u64 {
    references
        .iter()
        .map(|r| r.len() as u64)
        .min_by_key(|&len| {
            let diff = (len as i64 - candidate_len as i64).unsigned_abs();
            (diff, len)
        })
        .unwrap_or(0)
}

struct PooledCounts {
    matched: Vec<u64>,
    total: Vec<u64>,
    candidate_length: u64,
    reference_length: u64,
}

impl PooledCounts {
    fn new(max_n: usize) -> Self {
        PooledCounts {
            matched: vec![0; max_n],
            total: vec![0; max_n],
            candidate_length: 0,
            reference_length: 0,
        }
    }

    fn add_pair(
        &mut self,
        candidate: &[String],
        references: &[Vec<String>],
        max_n: usize,
    ) -> Result<(), MetricsError> {
        if candidate.is_empty() {
            return Err(MetricsError::EmptyCandidate);
        }
        let nonempty: Vec<&Vec<String>> = references.iter().filter(|r| !r.is_empty()).collect();
        if nonempty.is_empty() {
            return Err(MetricsError::NoReference);
        }
        for n in 1..=max_n {
            let (matched, total) = clipped_counts(candidate, &nonempty, n);
            self.matched[n - 1] += matched;
            self.total[n - 1] += total;
        }
        self.candidate_length += candidate.len() as u64;
        self.reference_length += closest_reference_length(candidate.len(), &nonempty);
        Ok(())
    }

    fn finish(self, smoothing: bool) -> BleuResult {
        let precisions: Vec<f64> = self
            .matched
            .iter()
            .zip(&self.total)
            .map(|(&m, &t)| {
                if smoothing && m == 0 {
                    // Add-one smoothing on any zero-count precision.
                    1.0 / (t + 1) as f64
                } else if t == 0 {
                    0.0
                } else {
                    m as f64 / t as f64
                }
            })
            .collect();

        let c = self.candidate_length;
        let r = self.reference_length;
        let brevity_penalty = if c >= r {
            1.0
        } else {
            (1.0 - r as f64 / c as f64).exp()
        };

        let score = if precisions.iter().any(|&p| p == 0.0) {
            0.0
        } else {
            let mean_log: f64 =
                precisions.iter().map(|p| p.ln()).sum::<f64>() / precisions.len() as f64;
            brevity_penalty * mean_log.exp()
        };

        BleuResult {
            score,
            precisions,
            brevity_penalty,
            candidate_length: c,
            reference_length: r,
        }
    }
}

/// Sentence-level BLEU of one candidate against one or more references.
///
/// N-gram matches are clipped per n-gram against the maximum reference
/// count; the geometric mean uses uniform 1/max_n weights; the brevity
/// penalty is exp(1 - r/c) when the candidate is shorter than the closest
/// reference. Without smoothing any zero precision makes the score 0.
pub fn bleu(
    candidate: &[String],
    references: &[Vec<String>],
    max_n: usize,
    smoothing: bool,
) -> Result<BleuResult, MetricsError> {
    let mut pooled = PooledCounts::new(max_n);
    pooled.add_pair(candidate, references, max_n)?;
    Ok(pooled.finish(smoothing))
}

/// Corpus-level BLEU: n-gram counts pooled over all pairs before the
/// geometric mean, candidate and effective reference lengths summed
/// before the brevity penalty.
pub fn corpus_bleu(
    pairs: &[(Vec<String>, Vec<Vec<String>>)],
    max_n: usize,
    smoothing: bool,
) -> Result<BleuResult, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyPairs);
    }
    let mut pooled = PooledCounts::new(max_n);
    for (candidate, references) in pairs {
        pooled.add_pair(candidate, references, max_n)?;
    }
    Ok(pooled.finish(smoothing))
}
