//! Command-line pipeline for automated relevance judgments: collection
//! statistics, prompt rendering, judging runs, agreement analysis,
//! translation screening, and cost accounting.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 backend failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Global;
use error::CliError;
use reljudge_core::prompting::DEFAULT_DOC_TOKEN_BUDGET;

#[derive(Parser)]
#[command(name = "reljudge", version, about = "LLM relevance judgments over TREC-style test collections")]
struct Cli {
    /// Optional JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory that receives every output file (default ".").
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Increase stderr chatter.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print collection, query, and judgment statistics.
    Stats(StatsArgs),
    /// Render the judging prompt for one pair.
    RenderPrompt(RenderPromptArgs),
    /// Judge every qrels pair with a model and write a run file.
    Judge(JudgeArgs),
    /// One judging run per temperature, each in its own run file.
    Sweep(JudgeArgs),
    /// Score run files against human qrels (Cohen's kappa).
    Agree(AgreeArgs),
    /// Corpus BLEU of candidate translations against references.
    Bleu(BleuArgs),
    /// Price the token usage recorded in a run file.
    Cost(CostArgs),
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
}

#[derive(Args)]
struct RenderPromptArgs {
    /// Template JSON; built-in template when omitted.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Literal query text (with --document).
    #[arg(long)]
    query: Option<String>,
    /// Literal document text (with --query).
    #[arg(long)]
    document: Option<String>,
    /// Query id resolved via --topics.
    #[arg(long)]
    query_id: Option<String>,
    /// Document id resolved via --corpus.
    #[arg(long)]
    doc_id: Option<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Truncate the document to this many tokens before rendering.
    #[arg(long, default_value_t = DEFAULT_DOC_TOKEN_BUDGET)]
    max_doc_tokens: usize,
    /// Write the prompt here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct JudgeArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Qrels file defining the pair list to judge.
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Model name sent to the endpoint and recorded in the run file.
    #[arg(long)]
    model: String,
    /// Backends config file (JSON array of endpoints).
    #[arg(long)]
    backends: Option<PathBuf>,
    /// Which endpoint of the backends file to use.
    #[arg(long)]
    backend_id: Option<String>,
    /// Serve recorded responses from this fixture instead of any endpoint.
    #[arg(long, value_name = "FIXTURE")]
    replay: Option<PathBuf>,
    /// Record every response into this fixture file for later replay.
    #[arg(long, value_name = "FIXTURE")]
    record: Option<PathBuf>,
    /// Template JSON; built-in template when omitted.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Comma-separated sampling temperatures.
    #[arg(long, default_value = "0.0")]
    temperatures: String,
    #[arg(long, default_value_t = 1024)]
    max_output_tokens: u64,
    /// Truncate documents to this many tokens before rendering.
    #[arg(long, default_value_t = DEFAULT_DOC_TOKEN_BUDGET)]
    max_doc_tokens: usize,
    /// Maximum concurrent in-flight requests.
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Price table for the expense summary.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Fail instead of treating an unpriced model as free.
    #[arg(long)]
    strict_prices: bool,
    #[arg(long, default_value_t = 3)]
    max_attempts: u32,
    #[arg(long, default_value_t = 1000)]
    backoff_ms: u64,
    #[arg(long, default_value_t = 2.0)]
    backoff_multiplier: f64,
    /// Minimum milliseconds between request admissions.
    #[arg(long, default_value_t = 0)]
    min_interval_ms: u64,
}

#[derive(Args)]
struct AgreeArgs {
    /// Run file(s) to score; repeatable.
    #[arg(long, required = true)]
    run: Vec<PathBuf>,
    /// Consolidated human qrels (annotator "gold").
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Per-annotator qrels as NAME=PATH; repeatable (for --mode average).
    #[arg(long, value_name = "NAME=PATH")]
    annotator_qrels: Vec<String>,
    /// gold | average
    #[arg(long, default_value = "gold")]
    mode: String,
}

#[derive(Args)]
struct BleuArgs {
    /// Candidate translations, one per line.
    #[arg(long)]
    candidates: PathBuf,
    /// Reference translations, line-aligned; repeatable.
    #[arg(long, required = true)]
    references: Vec<PathBuf>,
    #[arg(long, default_value_t = 4)]
    max_n: usize,
    /// Add-one smoothing for zero-count precisions.
    #[arg(long)]
    smooth: bool,
}

#[derive(Args)]
struct CostArgs {
    /// Run file whose usage is billed.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Fail on models missing from the price table.
    #[arg(long)]
    strict: bool,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let global = Global::resolve(cli.config.as_deref(), cli.out_dir, cli.verbose)?;
    match cli.command {
        Command::Stats(args) => commands::stats(&global, args),
        Command::RenderPrompt(args) => commands::render_prompt_cmd(&global, args),
        Command::Judge(args) => commands::judge(&global, args),
        Command::Sweep(args) => commands::sweep(&global, args),
        Command::Agree(args) => commands::agree(&global, args),
        Command::Bleu(args) => commands::bleu_cmd(args),
        Command::Cost(args) => commands::cost(&global, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
