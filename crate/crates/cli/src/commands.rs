//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::PathBuf;

use reljudge_core::analysis::{
    agreement, compare_runs, group_records, summary_csv, summary_table, AgreementMode,
    AgreementReport,
};
use reljudge_core::collection::{
    collection_stats, grade_distribution, parse_qrels, query_stats, read_corpus, read_qrels,
    read_topics, Qrel, RelevanceGrade, GOLD_ANNOTATOR,
};
use reljudge_core::judge::{
    load_backends, Backend, HttpBackend, ModelSpec, RecordingBackend, ReplayBackend, RetryPolicy,
};
use reljudge_core::metrics::{bleu_tokenize, corpus_bleu};
use reljudge_core::prompting::{default_template, load_template, render_prompt_budgeted};
use reljudge_core::runner::{
    compute_expense, read_run_file, run_judgments, temperature_sweep, ExpenseReport, Money,
    PriceTable, RunConfig, RunSummary, TemplateSource,
};

use crate::config::Global;
use crate::error::CliError;
use crate::{AgreeArgs, BleuArgs, CostArgs, JudgeArgs, RenderPromptArgs, StatsArgs};

// ── stats ────────────────────────────────────────────────────────────────

pub fn stats(global: &Global, args: StatsArgs) -> Result<(), CliError> {
    let corpus_path = global.require_input(args.corpus, &global.file.corpus, "corpus")?;
    let topics_path = global.require_input(args.topics, &global.file.topics, "topics")?;
    let qrels_path = global.require_input(args.qrels, &global.file.qrels, "qrels")?;

    let docs = read_corpus(&corpus_path)?;
    let topics = read_topics(&topics_path)?;
    let qrels = read_qrels(&qrels_path, GOLD_ANNOTATOR)?;

    let c = collection_stats(&docs);
    println!("Documents ({})", corpus_path.display());
    println!("  documents:            {}", c.num_documents);
    println!("  total tokens:         {}", c.total_tokens);
    println!("  distinct tokens:      {}", c.distinct_tokens);
    println!("  size bytes:           {}", c.size_bytes);
    println!("  tokens (text only):   {}", c.total_tokens_text_only);
    println!("  distinct (text only): {}", c.distinct_tokens_text_only);
    println!();

    let q = query_stats(&topics)?;
    println!("Queries ({})", topics_path.display());
    println!("  queries:   {}", q.num_queries);
    println!("  min words: {}", q.min_words);
    println!("  max words: {}", q.max_words);
    println!("  avg words: {:.2}", q.avg_words);
    println!();

    let dist = grade_distribution(&qrels)?;
    println!("Relevance judgments ({})", qrels_path.display());
    for grade in RelevanceGrade::ALL.iter().rev() {
        println!(
            "  {} - {:<19} {:>7}  {:>7}",
            grade.value(),
            grade.label(),
            dist.count(*grade),
            dist.percentage(*grade),
        );
    }
    println!("  total{:>24}", dist.total);
    Ok(())
}

// ── render-prompt ────────────────────────────────────────────────────────

pub fn render_prompt_cmd(global: &Global, args: RenderPromptArgs) -> Result<(), CliError> {
    let template = match args.template.or_else(|| global.file.template.clone()) {
        Some(path) => load_template(&path)?,
        None => default_template(),
    };

    let (query, document) = match (args.query, args.document) {
        (Some(q), Some(d)) => (q, d),
        (None, None) => {
            let (Some(query_id), Some(doc_id)) = (args.query_id, args.doc_id) else {
                return Err(CliError::Usage(
                    "provide --query and --document, or --query-id and --doc-id with --corpus/--topics"
                        .into(),
                ));
            };
            let corpus_path = global.require_input(args.corpus, &global.file.corpus, "corpus")?;
            let topics_path = global.require_input(args.topics, &global.file.topics, "topics")?;
            let topics = read_topics(&topics_path)?;
            let docs = read_corpus(&corpus_path)?;
            let query = topics
                .iter()
                .find(|t| t.query_id == query_id)
                .ok_or_else(|| CliError::Data(format!("query id {query_id:?} not in topics")))?
                .text
                .clone();
            let doc = docs
                .iter()
                .find(|d| d.doc_id == doc_id)
                .ok_or_else(|| CliError::Data(format!("doc id {doc_id:?} not in corpus")))?;
            let document = match &doc.title {
                Some(title) if !title.trim().is_empty() && !doc.text.trim().is_empty() => {
                    format!("{title}\n{}", doc.text)
                }
                Some(title) if !title.trim().is_empty() => title.clone(),
                _ => doc.text.clone(),
            };
            (query, document)
        }
        _ => {
            return Err(CliError::Usage(
                "--query and --document must be given together".into(),
            ));
        }
    };

    let rendered = render_prompt_budgeted(&template, &query, &document, args.max_doc_tokens)?;
    match args.output {
        Some(path) => {
            let path = global.out_path(Some(path), "prompt.txt")?;
            std::fs::write(&path, rendered.text.as_bytes())
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
            global.note(&format!("wrote {}", path.display()));
        }
        None => print!("{}", rendered.text),
    }
    Ok(())
}

// ── judge & sweep ────────────────────────────────────────────────────────

fn parse_temperatures(csv: &str) -> Result<Vec<f64>, CliError> {
    let temps: Result<Vec<f64>, _> = csv.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let temps = temps.map_err(|_| CliError::Usage(format!("bad --temperatures {csv:?}")))?;
    if temps.is_empty() {
        return Err(CliError::Usage("--temperatures must list at least one value".into()));
    }
    Ok(temps)
}

fn build_backend(global: &Global, args: &JudgeArgs) -> Result<Box<dyn Backend>, CliError> {
    if let Some(fixture) = &args.replay {
        let replay = ReplayBackend::load(fixture)?;
        return Ok(Box::new(replay));
    }
    let backends_path =
        global.require_input(args.backends.clone(), &global.file.backends, "backends")?;
    let endpoints = load_backends(&backends_path)?;
    let backend_id = args.backend_id.clone().ok_or_else(|| {
        CliError::Usage("missing --backend-id (or use --replay FIXTURE)".into())
    })?;
    let endpoint = endpoints
        .into_iter()
        .find(|e| e.backend_id == backend_id)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "backend id {backend_id:?} not found in {}",
                backends_path.display()
            ))
        })?;
    let http = HttpBackend::new(endpoint)?;
    match &args.record {
        Some(path) => {
            let path = global.out_path(Some(path.clone()), "fixture.jsonl")?;
            Ok(Box::new(RecordingBackend::create(http, &path)?))
        }
        None => Ok(Box::new(http)),
    }
}

fn build_run_config(global: &Global, args: &JudgeArgs) -> Result<RunConfig, CliError> {
    let corpus = global.require_input(args.corpus.clone(), &global.file.corpus, "corpus")?;
    let topics = global.require_input(args.topics.clone(), &global.file.topics, "topics")?;
    let qrels = global.require_input(args.qrels.clone(), &global.file.qrels, "qrels")?;

    let template = match args.template.clone().or_else(|| global.file.template.clone()) {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Data(format!(
                    "--template file {} does not exist",
                    path.display()
                )));
            }
            TemplateSource::Path(path)
        }
        None => TemplateSource::Default,
    };

    let price_table_path = match args.prices.clone().or_else(|| global.file.prices.clone()) {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Data(format!(
                    "--prices file {} does not exist",
                    path.display()
                )));
            }
            Some(path)
        }
        None => None,
    };

    let temperatures = parse_temperatures(&args.temperatures)?;
    let spec = ModelSpec {
        model_name: args.model.clone(),
        backend_id: args.backend_id.clone().unwrap_or_else(|| "replay".into()),
        temperature: temperatures[0],
        max_output_tokens: args.max_output_tokens,
    };
    let retry_policy = RetryPolicy::new(args.max_attempts, args.backoff_ms, args.backoff_multiplier)?;

    Ok(RunConfig {
        corpus_path: corpus,
        topics_path: topics,
        qrels_path: qrels,
        template,
        spec,
        temperatures,
        concurrency_limit: args.concurrency,
        checkpoint_path: global.out_path(args.checkpoint.clone(), "checkpoint.jsonl")?,
        price_table_path,
        output_path: global.out_path(args.output.clone(), "run.jsonl")?,
        max_doc_tokens: args.max_doc_tokens,
        retry_policy,
        min_request_interval_ms: args.min_interval_ms,
        strict_prices: args.strict_prices,
    })
}

fn print_summary(label: &str, summary: &RunSummary, output: &std::path::Path) {
    println!("{label}");
    println!(
        "  pairs:    {} total, {} judged, {} failed",
        summary.pairs_total, summary.pairs_judged, summary.pairs_failed
    );
    println!(
        "  time:     {:.1} s wall, {} ms summed API latency",
        summary.elapsed_seconds, summary.api_latency_ms
    );
    println!(
        "  tokens:   {} in, {} out",
        summary.expense.total_input_tokens, summary.expense.total_output_tokens
    );
    println!(
        "  expense:  {}{}",
        summary.expense.cost.display_dollars(),
        if summary.expense.estimated { " (estimated)" } else { "" }
    );
    println!("  run file: {}", output.display());
}

pub fn judge(global: &Global, args: JudgeArgs) -> Result<(), CliError> {
    let backend = build_backend(global, &args)?;
    let config = build_run_config(global, &args)?;
    global.note(&format!(
        "judging {} at temperatures {:?}",
        config.spec.model_name, config.temperatures
    ));
    let summary = run_judgments(&config, backend.as_ref())?;
    print_summary("run complete", &summary, &config.output_path);
    Ok(())
}

pub fn sweep(global: &Global, args: JudgeArgs) -> Result<(), CliError> {
    let backend = build_backend(global, &args)?;
    let config = build_run_config(global, &args)?;
    let runs = temperature_sweep(&config, backend.as_ref())?;
    for run in &runs {
        print_summary(
            &format!("temperature {}", run.temperature),
            &run.summary,
            &run.output_path,
        );
    }
    Ok(())
}

// ── agree ────────────────────────────────────────────────────────────────

fn sanitize_for_filename(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

fn load_agreement_qrels(global: &Global, args: &AgreeArgs) -> Result<Vec<Qrel>, CliError> {
    let mut qrels = Vec::new();
    if args.qrels.is_some() || global.file.qrels.is_some() {
        let path = global.require_input(args.qrels.clone(), &global.file.qrels, "qrels")?;
        qrels.extend(read_qrels(&path, GOLD_ANNOTATOR)?);
    }
    for entry in &args.annotator_qrels {
        let (name, path) = entry.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--annotator-qrels expects NAME=PATH, got {entry:?}"))
        })?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {path}: {e}")))?;
        qrels.extend(parse_qrels(&text, name)?);
    }
    if qrels.is_empty() {
        return Err(CliError::Usage(
            "no human labels: pass --qrels and/or --annotator-qrels".into(),
        ));
    }
    Ok(qrels)
}

pub fn agree(global: &Global, args: AgreeArgs) -> Result<(), CliError> {
    let mode = match args.mode.as_str() {
        "gold" => AgreementMode::Gold,
        "average" => AgreementMode::PerAnnotatorAverage,
        other => return Err(CliError::Usage(format!("unknown --mode {other:?}"))),
    };
    let qrels = load_agreement_qrels(global, &args)?;

    let mut reports: Vec<AgreementReport> = Vec::new();
    for run_path in &args.run {
        let records = read_run_file(run_path)?;
        for group in group_records(&records) {
            reports.push(agreement(&group, &qrels, mode)?);
        }
    }

    for report in &reports {
        let name = format!(
            "report-{}-t{}.json",
            sanitize_for_filename(&report.model_name),
            report.temperature
        );
        let path = global.out_path(Some(PathBuf::from(name)), "report.json")?;
        let json = serde_json::to_string_pretty(report)
            .map_err(|e| CliError::Data(format!("report serialization: {e}")))?;
        std::fs::write(&path, json + "\n")
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        println!("report: {}", path.display());
    }

    let csv_path = global.out_path(Some(PathBuf::from("summary.csv")), "summary.csv")?;
    std::fs::write(&csv_path, summary_csv(&reports))
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", csv_path.display())))?;
    println!("csv:    {}", csv_path.display());
    println!();
    print!("{}", summary_table(&reports));

    if reports.len() == 2 {
        let cmp = compare_runs(&reports[0], &reports[1])?;
        println!();
        println!(
            "delta ({} vs {}): {}",
            reports[1].model_name, reports[0].model_name, cmp.delta_display()
        );
    }
    Ok(())
}

// ── bleu ─────────────────────────────────────────────────────────────────

fn read_lines(path: &std::path::Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn bleu_cmd(args: BleuArgs) -> Result<(), CliError> {
    let candidates = read_lines(&args.candidates)?;
    let mut reference_files = Vec::new();
    for path in &args.references {
        let lines = read_lines(path)?;
        if lines.len() != candidates.len() {
            return Err(CliError::Data(format!(
                "{} has {} lines but {} has {}",
                path.display(),
                lines.len(),
                args.candidates.display(),
                candidates.len()
            )));
        }
        reference_files.push(lines);
    }
    if reference_files.is_empty() {
        return Err(CliError::Usage("at least one --references file is required".into()));
    }

    let mut pairs = Vec::new();
    for (i, candidate) in candidates.iter().enumerate() {
        let cand_tokens = bleu_tokenize(candidate);
        if cand_tokens.is_empty() {
            return Err(CliError::Data(format!(
                "candidate line {} is empty after tokenization",
                i + 1
            )));
        }
        let refs: Vec<Vec<String>> =
            reference_files.iter().map(|f| bleu_tokenize(&f[i])).collect();
        if refs.iter().all(|r| r.is_empty()) {
            return Err(CliError::Data(format!(
                "every reference for line {} is empty after tokenization",
                i + 1
            )));
        }
        pairs.push((cand_tokens, refs));
    }

    let result = corpus_bleu(&pairs, args.max_n, args.smooth)?;
    println!("BLEU: {:.4}", result.score);
    let precisions: Vec<String> = result.precisions.iter().map(|p| format!("{p:.4}")).collect();
    println!("precisions: {}", precisions.join(" "));
    println!("brevity penalty: {:.4}", result.brevity_penalty);
    println!(
        "lengths: candidate {}, reference {}",
        result.candidate_length, result.reference_length
    );
    Ok(())
}

// ── cost ─────────────────────────────────────────────────────────────────

pub fn cost(global: &Global, args: CostArgs) -> Result<(), CliError> {
    let prices_path = global.require_input(args.prices, &global.file.prices, "prices")?;
    let prices = PriceTable::load(&prices_path)?;
    let records = read_run_file(&args.run)?;
    if records.is_empty() {
        println!("run file is empty; nothing to bill");
        return Ok(());
    }

    let mut by_model: BTreeMap<String, (u64, u64, bool)> = BTreeMap::new();
    for r in &records {
        let entry = by_model.entry(r.model_name.clone()).or_insert((0, 0, false));
        entry.0 += r.input_tokens;
        entry.1 += r.output_tokens;
        entry.2 |= r.usage_estimated;
    }

    let mut total = Money::ZERO;
    let mut any_estimated = false;
    for (model, (input, output, usage_estimated)) in &by_model {
        let mut report: ExpenseReport =
            compute_expense(*input, *output, model, &prices, args.strict)?;
        report.estimated |= usage_estimated;
        any_estimated |= report.estimated;
        total = total + report.cost;
        println!(
            "{model}: {input} in, {output} out -> {}{}",
            report.cost.display_dollars(),
            if report.estimated { " (estimated)" } else { "" }
        );
    }
    if by_model.len() > 1 {
        println!(
            "total: {}{}",
            total.display_dollars(),
            if any_estimated { " (estimated)" } else { "" }
        );
    }
    Ok(())
}
