//! Agreement and translation-quality measurement math.

mod bleu;
mod kappa;

pub use bleu::{bleu, bleu_tokenize, corpus_bleu, BleuResult, DEFAULT_MAX_N};
pub use kappa::{cohen_kappa, confusion_matrix, pairwise_average_kappa, ConfusionMatrix, KappaResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label lists have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty label input")]
    EmptyLabels,
    #[error("confusion matrix is empty (n = 0)")]
    EmptyMatrix,
    #[error("cells do not form a square matrix (len {0})")]
    NotSquare(usize),
    #[error("pairwise kappa needs at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("all annotator pairs are degenerate, no kappa to average")]
    AllPairsDegenerate,
    #[error("empty candidate token list")]
    EmptyCandidate,
    #[error("no non-empty reference")]
    NoReference,
    #[error("empty pair list")]
    EmptyPairs,
}
