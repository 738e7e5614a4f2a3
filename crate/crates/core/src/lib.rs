//! Automated graded relevance judgment of query-document pairs with
//! hosted language models, and the measurement around it: test-collection
//! handling, few-shot prompt construction, robust verdict parsing,
//! checkpointed batch runs, inter-annotator agreement (Cohen's kappa),
//! BLEU translation screening, and exact cost accounting.

pub mod analysis;
pub mod collection;
pub mod judge;
pub mod metrics;
pub mod prompting;
pub mod runner;

pub use analysis::{agreement, compare_runs, AgreementMode, AgreementReport, RunComparison};
pub use collection::{Document, Qrel, RelevanceGrade, Topic};
pub use judge::{parse_judgment, Backend, ModelSpec, ParsedJudgment, RetryPolicy};
pub use metrics::{bleu, cohen_kappa, corpus_bleu, ConfusionMatrix, KappaResult};
pub use prompting::{default_template, render_prompt, PromptTemplate, RenderedPrompt};
pub use runner::{compute_expense, run_judgments, temperature_sweep, RunConfig, RunRecord, RunSummary};
