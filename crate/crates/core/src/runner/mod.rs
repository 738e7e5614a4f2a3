//! Orchestration of full judging runs: checkpointing, resume, temperature
//! sweeps, timing, and cost accounting.

mod expense;

pub use expense::{compute_expense, ExpenseError, ExpenseReport, Money, Price, PriceTable};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collection::{
    read_corpus, read_qrels, read_topics, CollectionError, Document, RelevanceGrade,
    GOLD_ANNOTATOR,
};
use crate::judge::{
    judge_pair, Backend, JudgeError, ModelSpec, RateLimitedBackend, RetryPolicy,
};
use crate::prompting::{
    default_template, load_template, PromptError, PromptTemplate, DEFAULT_DOC_TOKEN_BUDGET,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Collection(#[from] CollectionError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Expense(#[from] ExpenseError),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("{count} pair(s) reference unknown ids, e.g. {example}")]
    UnresolvedPairs { count: usize, example: String },
    #[error("checkpoint {path} line {line}: {msg}")]
    CheckpointParse { path: String, line: usize, msg: String },
    #[error("run file {path} line {line}: {msg}")]
    RunFileParse { path: String, line: usize, msg: String },
    #[error("duplicate record for ({query_id}, {doc_id}) in run file {path}")]
    DuplicateRecord { path: String, query_id: String, doc_id: String },
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run interrupted after {completed} new record(s); checkpoint preserved")]
    Interrupted { completed: usize },
}

/// Where the prompt template comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateSource {
    Default,
    Path(PathBuf),
}

/// Everything a judging run needs. The pair list comes from the qrels
/// file: the run judges exactly the pairs humans judged, once per
/// configured temperature.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub topics_path: PathBuf,
    pub qrels_path: PathBuf,
    pub template: TemplateSource,
    pub spec: ModelSpec,
    pub temperatures: Vec<f64>,
    pub concurrency_limit: usize,
    pub checkpoint_path: PathBuf,
    pub price_table_path: Option<PathBuf>,
    pub output_path: PathBuf,
    pub max_doc_tokens: usize,
    pub retry_policy: RetryPolicy,
    pub min_request_interval_ms: u64,
    pub strict_prices: bool,
}

impl RunConfig {
    /// Sequential single-temperature config with defaults for the knobs.
    pub fn new(
        corpus_path: impl Into<PathBuf>,
        topics_path: impl Into<PathBuf>,
        qrels_path: impl Into<PathBuf>,
        spec: ModelSpec,
        checkpoint_path: impl Into<PathBuf>,
        output_path: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            corpus_path: corpus_path.into(),
            topics_path: topics_path.into(),
            qrels_path: qrels_path.into(),
            template: TemplateSource::Default,
            temperatures: vec![spec.temperature],
            spec,
            concurrency_limit: 1,
            checkpoint_path: checkpoint_path.into(),
            price_table_path: None,
            output_path: output_path.into(),
            max_doc_tokens: DEFAULT_DOC_TOKEN_BUDGET,
            retry_policy: RetryPolicy::default(),
            min_request_interval_ms: 0,
            strict_prices: false,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.spec.validate()?;
        if self.temperatures.is_empty() {
            return Err(RunError::InvalidConfig("temperatures must be non-empty".into()));
        }
        if self.temperatures.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(RunError::InvalidConfig(
                "temperatures must be finite and >= 0".into(),
            ));
        }
        if self.concurrency_limit == 0 {
            return Err(RunError::InvalidConfig("concurrency_limit must be >= 1".into()));
        }
        Ok(())
    }
}

/// One verdict in a run file. `score` is None for a pair whose judgment
/// failed after all retries; such pairs are excluded from agreement but
/// still counted and billed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub doc_id: String,
    pub model_name: String,
    pub temperature: f64,
    pub score: Option<RelevanceGrade>,
    pub reason: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub attempts: u32,
    pub latency_ms: u64,
    pub timestamp_ms: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub usage_estimated: bool,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.score.is_none()
    }
}

/// Checkpoint line: a run record plus the failure diagnostic, when any.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointRecord {
    #[serde(flatten)]
    record: RunRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Totals for one completed (or resumed) run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub pairs_total: u64,
    pub pairs_judged: u64,
    pub pairs_failed: u64,
    pub elapsed_seconds: f64,
    pub api_latency_ms: u64,
    pub expense: ExpenseReport,
}

type RecordKey = (String, u64, String, String);

fn record_key(model: &str, temperature: f64, query_id: &str, doc_id: &str) -> RecordKey {
    (
        model.to_string(),
        temperature.to_bits(),
        query_id.to_string(),
        doc_id.to_string(),
    )
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write `content` to `path` atomically: write a sibling temp file, sync,
/// then rename over the target.
fn write_atomic(path: &Path, content: &str) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    {
        use std::io::Write;
        let mut file = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(content.as_bytes()).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Append-only record log, persisted atomically after every record so an
/// interrupted run resumes without re-querying completed pairs.
struct Checkpoint {
    path: PathBuf,
    lines: Vec<String>,
    completed: HashMap<RecordKey, RunRecord>,
}

impl Checkpoint {
    fn load(path: &Path) -> Result<Self, RunError> {
        let mut checkpoint = Checkpoint {
            path: path.to_path_buf(),
            lines: Vec::new(),
            completed: HashMap::new(),
        };
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(checkpoint),
            Err(e) => return Err(io_err(path)(e)),
        };
        let ends_with_newline = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (idx, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CheckpointRecord>(line) {
                Ok(entry) => {
                    let key = record_key(
                        &entry.record.model_name,
                        entry.record.temperature,
                        &entry.record.query_id,
                        &entry.record.doc_id,
                    );
                    checkpoint.lines.push((*line).to_string());
                    checkpoint.completed.insert(key, entry.record);
                }
                // A torn final line (no trailing newline) means the process
                // was killed mid-write; drop it and re-judge that pair.
                Err(_) if idx == lines.len() - 1 && !ends_with_newline => break,
                Err(e) => {
                    return Err(RunError::CheckpointParse {
                        path: path.display().to_string(),
                        line: idx + 1,
                        msg: e.to_string(),
                    });
                }
            }
        }
        Ok(checkpoint)
    }

    fn contains(&self, key: &RecordKey) -> bool {
        self.completed.contains_key(key)
    }

    fn get(&self, key: &RecordKey) -> Option<&RunRecord> {
        self.completed.get(key)
    }

    fn append(&mut self, entry: &CheckpointRecord) -> Result<(), RunError> {
        let line = serde_json::to_string(entry).expect("record serializes");
        self.lines.push(line);
        let key = record_key(
            &entry.record.model_name,
            entry.record.temperature,
            &entry.record.query_id,
            &entry.record.doc_id,
        );
        self.completed.insert(key, entry.record.clone());
        let mut content = self.lines.join("\n");
        content.push('\n');
        write_atomic(&self.path, &content)
    }
}

struct Task {
    temperature: f64,
    query_id: String,
    doc_id: String,
    query_text: String,
    document_text: String,
}

/// The document as shown to the model: title above body when both exist.
fn document_prompt_text(doc: &Document) -> String {
    match &doc.title {
        Some(title) if !title.trim().is_empty() => {
            if doc.text.trim().is_empty() {
                title.clone()
            } else {
                format!("{title}\n{}", doc.text)
            }
        }
        _ => doc.text.clone(),
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Run judgments for every (pair, temperature), resuming from the
/// checkpoint, and write the sorted run file. See
/// [`run_judgments_cancellable`] for the interruptible variant.
pub fn run_judgments(config: &RunConfig, backend: &dyn Backend) -> Result<RunSummary, RunError> {
    let never = AtomicBool::new(false);
    run_judgments_cancellable(config, backend, &never)
}

/// As [`run_judgments`], but stops cleanly (checkpoint intact, no output
/// file) once `cancel` becomes true. No new backend call starts after the
/// flag is observed.
pub fn run_judgments_cancellable(
    config: &RunConfig,
    backend: &dyn Backend,
    cancel: &AtomicBool,
) -> Result<RunSummary, RunError> {
    let started = Instant::now();
    config.validate()?;

    let docs = read_corpus(&config.corpus_path)?;
    let topics = read_topics(&config.topics_path)?;
    let qrels = read_qrels(&config.qrels_path, GOLD_ANNOTATOR)?;

    let doc_map: HashMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let topic_map: HashMap<&str, &str> =
        topics.iter().map(|t| (t.query_id.as_str(), t.text.as_str())).collect();

    // The qrels define the pair list; first appearance wins, duplicates
    // (e.g. several annotators) collapse to one pair.
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for q in &qrels {
        let pair = (q.query_id.clone(), q.doc_id.clone());
        if seen.insert(pair.clone()) {
            pairs.push(pair);
        }
    }
    if pairs.is_empty() {
        return Err(RunError::InvalidConfig(format!(
            "qrels file {} contains no pairs",
            config.qrels_path.display()
        )));
    }

    // Every id must resolve before any backend call.
    let mut unresolved: BTreeSet<String> = BTreeSet::new();
    for (qid, did) in &pairs {
        if !topic_map.contains_key(qid.as_str()) {
            unresolved.insert(format!("query {qid}"));
        }
        if !doc_map.contains_key(did.as_str()) {
            unresolved.insert(format!("doc {did}"));
        }
    }
    if !unresolved.is_empty() {
        return Err(RunError::UnresolvedPairs {
            count: unresolved.len(),
            example: unresolved.iter().next().unwrap().clone(),
        });
    }

    let template = match &config.template {
        TemplateSource::Default => default_template(),
        TemplateSource::Path(path) => load_template(path)?,
    };

    let mut checkpoint = Checkpoint::load(&config.checkpoint_path)?;

    let mut tasks: Vec<Task> = Vec::new();
    for &temperature in &config.temperatures {
        for (qid, did) in &pairs {
            tasks.push(Task {
                temperature,
                query_id: qid.clone(),
                doc_id: did.clone(),
                query_text: topic_map[qid.as_str()].to_string(),
                document_text: document_prompt_text(doc_map[did.as_str()]),
            });
        }
    }

    let pending: Vec<&Task> = tasks
        .iter()
        .filter(|t| {
            !checkpoint.contains(&record_key(
                &config.spec.model_name,
                t.temperature,
                &t.query_id,
                &t.doc_id,
            ))
        })
        .collect();

    let limited = RateLimitedBackend::new(
        backend,
        Duration::from_millis(config.min_request_interval_ms),
    );

    let completed_now =
        execute_tasks(config, &limited, &template, &pending, cancel, &mut checkpoint)?;
    if cancel.load(Ordering::SeqCst) {
        return Err(RunError::Interrupted {
            completed: completed_now,
        });
    }

    // Sorted rewrite: records ordered by (temperature, query_id, doc_id)
    // regardless of completion order.
    let mut records: Vec<RunRecord> = tasks
        .iter()
        .map(|t| {
            checkpoint
                .get(&record_key(
                    &config.spec.model_name,
                    t.temperature,
                    &t.query_id,
                    &t.doc_id,
                ))
                .expect("all tasks completed")
                .clone()
        })
        .collect();
    records.sort_by(|a, b| {
        a.temperature
            .partial_cmp(&b.temperature)
            .expect("finite temperatures")
            .then_with(|| a.query_id.cmp(&b.query_id))
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    let mut content = String::new();
    for record in &records {
        content.push_str(&serde_json::to_string(record).expect("record serializes"));
        content.push('\n');
    }
    write_atomic(&config.output_path, &content)?;

    let prices = match &config.price_table_path {
        Some(path) => PriceTable::load(path)?,
        None => PriceTable::empty(),
    };
    let total_input: u64 = records.iter().map(|r| r.input_tokens).sum();
    let total_output: u64 = records.iter().map(|r| r.output_tokens).sum();
    let mut expense = compute_expense(
        total_input,
        total_output,
        &config.spec.model_name,
        &prices,
        config.strict_prices,
    )?;
    expense.estimated |= records.iter().any(|r| r.usage_estimated);

    let pairs_judged = records.iter().filter(|r| !r.failed()).count() as u64;
    Ok(RunSummary {
        pairs_total: records.len() as u64,
        pairs_judged,
        pairs_failed: records.len() as u64 - pairs_judged,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        api_latency_ms: records.iter().map(|r| r.latency_ms).sum(),
        expense,
    })
}

/// Judge all pending tasks with up to `concurrency_limit` workers; a
/// single writer appends each record to the checkpoint as it lands.
/// Returns the number of records written.
fn execute_tasks(
    config: &RunConfig,
    backend: &dyn Backend,
    template: &PromptTemplate,
    pending: &[&Task],
    cancel: &AtomicBool,
    checkpoint: &mut Checkpoint,
) -> Result<usize, RunError> {
    let deterministic = backend.is_deterministic();
    let next_task = AtomicUsize::new(0);
    let workers = config.concurrency_limit.min(pending.len().max(1));
    let mut written = 0usize;
    let mut write_error: Option<RunError> = None;

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<CheckpointRecord>();
        for _ in 0..workers {
            let tx = tx.clone();
            let next_task = &next_task;
            let spec = &config.spec;
            let policy = &config.retry_policy;
            let max_doc_tokens = config.max_doc_tokens;
            scope.spawn(move || loop {
                if cancel.load(Ordering::SeqCst) {
                    break;
                }
                let idx = next_task.fetch_add(1, Ordering::SeqCst);
                let Some(task) = pending.get(idx) else { break };
                let spec = ModelSpec {
                    temperature: task.temperature,
                    ..spec.clone()
                };
                let outcome = judge_pair(
                    backend,
                    template,
                    &task.query_text,
                    &task.document_text,
                    &spec,
                    policy,
                    max_doc_tokens,
                );
                let timestamp_ms = if deterministic { 0 } else { now_ms() };
                let entry = match outcome {
                    Ok(success) => CheckpointRecord {
                        record: RunRecord {
                            query_id: task.query_id.clone(),
                            doc_id: task.doc_id.clone(),
                            model_name: spec.model_name.clone(),
                            temperature: task.temperature,
                            score: Some(success.judgment.score),
                            reason: success.judgment.reason,
                            input_tokens: success.totals.input_tokens,
                            output_tokens: success.totals.output_tokens,
                            attempts: success.totals.attempts,
                            latency_ms: success.totals.latency_ms,
                            timestamp_ms,
                            usage_estimated: success.totals.usage_estimated,
                        },
                        error: None,
                    },
                    Err(failure) => CheckpointRecord {
                        record: RunRecord {
                            query_id: task.query_id.clone(),
                            doc_id: task.doc_id.clone(),
                            model_name: spec.model_name.clone(),
                            temperature: task.temperature,
                            score: None,
                            reason: String::new(),
                            input_tokens: failure.totals.input_tokens,
                            output_tokens: failure.totals.output_tokens,
                            attempts: failure.totals.attempts,
                            latency_ms: failure.totals.latency_ms,
                            timestamp_ms,
                            usage_estimated: failure.totals.usage_estimated,
                        },
                        error: Some(failure.cause.to_string()),
                    },
                };
                if tx.send(entry).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for entry in rx {
            if write_error.is_some() {
                continue;
            }
            match checkpoint.append(&entry) {
                Ok(()) => written += 1,
                Err(e) => {
                    write_error = Some(e);
                    cancel.store(true, Ordering::SeqCst);
                }
            }
        }
    });

    match write_error {
        Some(e) => Err(e),
        None => Ok(written),
    }
}

fn format_temperature(t: f64) -> String {
    format!("{t}")
}

/// Output path for one temperature of a sweep: `run.jsonl` at 0.5 becomes
/// `run-t0.5.jsonl`.
pub fn sweep_output_path(base: &Path, temperature: f64) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let name = match base.extension().and_then(|s| s.to_str()) {
        Some(ext) => format!("{stem}-t{}.{ext}", format_temperature(temperature)),
        None => format!("{stem}-t{}", format_temperature(temperature)),
    };
    base.with_file_name(name)
}

/// One completed run of a temperature sweep.
#[derive(Debug)]
pub struct SweepRun {
    pub temperature: f64,
    pub output_path: PathBuf,
    pub summary: RunSummary,
}

/// One complete, separately-filed run per configured temperature. All
/// temperatures share the checkpoint, which is keyed by temperature, so a
/// sweep resumes exactly like a single run.
pub fn temperature_sweep(config: &RunConfig, backend: &dyn Backend) -> Result<Vec<SweepRun>, RunError> {
    config.validate()?;
    let mut runs = Vec::new();
    for &temperature in &config.temperatures {
        let sub = RunConfig {
            temperatures: vec![temperature],
            output_path: sweep_output_path(&config.output_path, temperature),
            ..config.clone()
        };
        let summary = run_judgments(&sub, backend)?;
        runs.push(SweepRun {
            temperature,
            output_path: sub.output_path,
            summary,
        });
    }
    Ok(runs)
}

/// Read a run file (line-delimited RunRecord JSON).
pub fn read_run_file(path: &Path) -> Result<Vec<RunRecord>, RunError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(line).map_err(|e| RunError::RunFileParse {
            path: path.display().to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
