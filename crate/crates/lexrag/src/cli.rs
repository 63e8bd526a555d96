//! The `lexrag` command line.

use crate::agent::{export_trajectories, import_trajectories, run_agent, Trajectory};
use crate::bench::{
    measure_hybrid, measure_logical, read_workload_jsonl, replay_load, workload_from_trajectories, HttpTarget, InProcess,
    LoadTarget, ReplayWorkload,
};
use crate::config::{Config, ConfigError};
use crate::corpus::{ingest_jsonl, read_qa_jsonl};
use crate::embed::{build_dense_index, embed_corpus, HttpEmbedder};
use crate::eval::{
    score_trajectories, trajectory_metrics, unavailable_report, ExactMatchGrouper, GoldPassageRelevance, IntentGrouper,
    LlmGrouper, LlmRelevance, RelevanceJudge,
};
use crate::llm::{Decoding, HttpChatModel};
use crate::retrieval::{Backend, HybridRetriever, LogicalRetriever, Retriever, ToolQuery};
use crate::service::{serve_blocking, ServiceState};
use crate::store::{load_dense, load_index, save_dense, save_index};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lexrag_core::eval::build_unavailable_set;
use lexrag_core::{Bm25Params, DefaultOperator};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

#[derive(Parser, Debug)]
#[command(name = "lexrag", version, about = "Logical-query retrieval, agent runs, evaluation and load testing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build indexes from a JSONL corpus.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Run one query against an index directory.
    Search(SearchArgs),
    /// Start the HTTP search service.
    Serve {
        config: PathBuf,
    },
    /// Run the agent over questions.
    #[command(subcommand)]
    Agent(AgentCmd),
    /// Score trajectories.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Construction timing and replay load tests.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand, Debug)]
pub enum IndexCmd {
    /// Build the inverted index directory.
    Build { corpus: PathBuf, out: PathBuf },
    /// Embed every passage and write a dense index file.
    Embed {
        config: PathBuf,
        corpus: PathBuf,
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OpArg {
    #[value(name = "AND", alias = "and")]
    And,
    #[value(name = "OR", alias = "or")]
    Or,
}

impl From<OpArg> for DefaultOperator {
    fn from(op: OpArg) -> Self {
        match op {
            OpArg::And => DefaultOperator::And,
            OpArg::Or => DefaultOperator::Or,
        }
    }
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    pub index: PathBuf,
    pub query: String,
    #[arg(long = "default-op", value_enum, default_value = "OR")]
    pub default_op: OpArg,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Reject AND, OR, NOT and parentheses.
    #[arg(long)]
    pub no_boolean_ops: bool,
    /// Print the raw JSON result.
    #[arg(long)]
    pub json: bool,
}

#[derive(Subcommand, Debug)]
pub enum AgentCmd {
    /// Answer each question with the configured backend and chat model.
    Run {
        config: PathBuf,
        questions: PathBuf,
        out: PathBuf,
        /// Only the first N questions.
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GrouperArg {
    Exact,
    Llm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RelevanceArg {
    Gold,
    Llm,
}

#[derive(Subcommand, Debug)]
pub enum EvalCmd {
    /// EM, F1 and, with --config, judge accuracy.
    Score {
        questions: PathBuf,
        trajectories: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a corpus with the gold passages of the first N annotated questions removed.
    PrepareUnavailable {
        questions: PathBuf,
        corpus: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Refusal, hallucination and gold-leak rates of runs over a pruned corpus.
    Unavailable {
        config: PathBuf,
        questions: PathBuf,
        trajectories: PathBuf,
    },
    /// Same-intent overlap and intent recovery.
    Trajectory {
        questions: PathBuf,
        trajectories: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "exact")]
        grouper: GrouperArg,
        #[arg(long, value_enum, default_value = "gold")]
        relevance: RelevanceArg,
    },
}

#[derive(Subcommand, Debug)]
pub enum BenchCmd {
    /// Time index construction for one backend.
    Construct {
        corpus: PathBuf,
        #[arg(long, default_value = "logical")]
        backend: Backend,
        /// Needed for the hybrid backend's embedding service.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replay queries against a running service or an index in process.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Workload JSONL, or trajectories with --from-trajectories.
    pub workload: PathBuf,
    #[arg(long)]
    pub from_trajectories: bool,
    /// Base URL of a running service.
    #[arg(long, conflicts_with = "index")]
    pub url: Option<String>,
    /// Index directory to query in process.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,16")]
    pub concurrency: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub warmup: usize,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_config(path: &Path) -> Result<Config, ConfigError> {
    Config::load(path)
}

fn chat_model(config: &Config) -> anyhow::Result<HttpChatModel> {
    Ok(HttpChatModel::new(config.llm.clone())?)
}

fn retriever_for(config: &Config, backend: Backend) -> anyhow::Result<Arc<dyn Retriever>> {
    let snapshot = Arc::new(load_index(&config.service.index)?);
    Ok(match backend {
        Backend::Logical => Arc::new(LogicalRetriever::new(snapshot, config.bm25)),
        Backend::Hybrid => {
            let path = config.service.dense_index.as_ref().context("hybrid backend needs service.dense_index")?;
            let dense = Arc::new(load_dense(path)?);
            let embedder = Arc::new(HttpEmbedder::new(config.embedding.clone())?);
            Arc::new(HybridRetriever::new(snapshot, dense, embedder, config.bm25, config.fusion)?)
        }
    })
}

fn cmd_search(args: SearchArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let snapshot = Arc::new(load_index(&args.index)?);
    let mut retriever = LogicalRetriever::new(snapshot, Bm25Params::default());
    if args.no_boolean_ops {
        retriever = retriever.without_boolean_ops();
    }
    let found = retriever.search(&ToolQuery::new(args.query, args.k).with_operator(args.default_op.into()))?;
    if args.json {
        return print_json(out, &found.result);
    }
    writeln!(out, "{} matching documents", found.result.total_candidates)?;
    for (i, hit) in found.result.hits.iter().enumerate() {
        writeln!(out, "{:>3}. {:<12} {:>9.4}  {}", i + 1, hit.doc_id, hit.score, hit.title)?;
        writeln!(out, "     {}", hit.snippet)?;
    }
    Ok(())
}

fn cmd_index(cmd: IndexCmd, out: &mut dyn Write) -> anyhow::Result<()> {
    match cmd {
        IndexCmd::Build { corpus, out: dir } => {
            let docs = ingest_jsonl(&corpus)?;
            let (report, snapshot) = measure_logical(&docs)?;
            let manifest = save_index(&snapshot, &dir)?;
            writeln!(
                out,
                "indexed {} documents into {} in {:.3} s",
                manifest.doc_count,
                dir.display(),
                report.total_seconds
            )?;
        }
        IndexCmd::Embed { config, corpus, out: path } => {
            let config = load_config(&config)?;
            let docs = ingest_jsonl(&corpus)?;
            let embedder = HttpEmbedder::new(config.embedding.clone())?;
            let vectors = embed_corpus(&docs, &embedder, config.embedding.batch_size)?;
            let dense = build_dense_index(&docs, &vectors)?;
            save_dense(&dense, &path)?;
            writeln!(out, "embedded {} passages (dim {}) into {}", dense.len(), dense.dim(), path.display())?;
        }
    }
    Ok(())
}

fn cmd_agent(cmd: AgentCmd, out: &mut dyn Write) -> anyhow::Result<()> {
    let AgentCmd::Run { config, questions, out: path, limit } = cmd;
    let config = load_config(&config)?;
    let mut examples = read_qa_jsonl(&questions)?;
    if let Some(n) = limit {
        examples.truncate(n);
    }
    let retriever = retriever_for(&config, config.agent.backend)?;
    let model = chat_model(&config)?;
    let mut trajectories: Vec<Trajectory> = Vec::with_capacity(examples.len());
    for ex in &examples {
        let t = run_agent(&ex.question_id, &ex.question, &config.agent, retriever.as_ref(), &model)?;
        tracing::info!(question = %ex.question_id, turns = t.turns.len(), outcome = ?t.outcome, "finished");
        trajectories.push(t);
    }
    export_trajectories(&trajectories, &path)?;
    writeln!(out, "wrote {} trajectories to {}", trajectories.len(), path.display())?;
    Ok(())
}

fn cmd_eval(cmd: EvalCmd, out: &mut dyn Write) -> anyhow::Result<()> {
    match cmd {
        EvalCmd::Score { questions, trajectories, config } => {
            let examples = read_qa_jsonl(&questions)?;
            let trajs = import_trajectories(&trajectories)?;
            let report = match config {
                Some(c) => {
                    let config = load_config(&c)?;
                    let judge = chat_model(&config)?;
                    score_trajectories(&trajs, &examples, Some((&judge, &config.judge)))
                }
                None => score_trajectories(&trajs, &examples, None),
            };
            print_json(out, &report)
        }
        EvalCmd::PrepareUnavailable { questions, corpus, out_dir, size, config } => {
            let size = match (size, config) {
                (Some(n), _) => n,
                (None, Some(c)) => load_config(&c)?.eval.unavailable_subset,
                (None, None) => bail!("give --size or --config"),
            };
            let examples = read_qa_jsonl(&questions)?;
            let docs = ingest_jsonl(&corpus)?;
            let set = build_unavailable_set(&examples, &docs, size)?;
            std::fs::create_dir_all(&out_dir).with_context(|| out_dir.display().to_string())?;
            write_jsonl(&out_dir.join("corpus.jsonl"), set.corpus.iter().map(|d| {
                serde_json::json!({"id": d.doc_id, "title": d.title, "contents": d.content})
            }))?;
            write_jsonl(&out_dir.join("questions.jsonl"), set.examples.iter().map(|e| serde_json::to_value(e).expect("serializes")))?;
            let (_, snapshot) = measure_logical(&set.corpus)?;
            save_index(&snapshot, &out_dir.join("index"))?;
            writeln!(
                out,
                "{} questions, {} passages removed, {} skipped without gold ids, {} skipped with gold ids missing from the corpus",
                set.examples.len(),
                set.removed_passages,
                set.skipped_unannotated,
                set.skipped_missing_gold
            )?;
            Ok(())
        }
        EvalCmd::Unavailable { config, questions, trajectories } => {
            let config = load_config(&config)?;
            let judge = chat_model(&config)?;
            let report = unavailable_report(&import_trajectories(&trajectories)?, &read_qa_jsonl(&questions)?, &judge, &config.judge);
            print_json(out, &report)
        }
        EvalCmd::Trajectory { questions, trajectories, config, grouper, relevance } => {
            let examples = read_qa_jsonl(&questions)?;
            let trajs = import_trajectories(&trajectories)?;
            let config = config.map(|c| load_config(&c)).transpose()?;
            let model = config.as_ref().map(chat_model).transpose()?;
            let need_model = || model.as_ref().context("an LLM grouper or relevance judge needs --config");
            let decoding = Decoding { temperature: 0.0, top_p: 1.0 };
            let exact = ExactMatchGrouper;
            let llm_grouper;
            let grouper: &dyn IntentGrouper = match grouper {
                GrouperArg::Exact => &exact,
                GrouperArg::Llm => {
                    llm_grouper = LlmGrouper { model: need_model()?, decoding };
                    &llm_grouper
                }
            };
            let gold = GoldPassageRelevance;
            let llm_relevance;
            let relevance: &dyn RelevanceJudge = match relevance {
                RelevanceArg::Gold => &gold,
                RelevanceArg::Llm => {
                    let prompt = config.as_ref().map(|c| c.eval.relevance_prompt.clone()).unwrap_or_default();
                    llm_relevance = LlmRelevance { model: need_model()?, decoding, prompt };
                    &llm_relevance
                }
            };
            let top_k = config.as_ref().map_or(5, |c| c.eval.top_k);
            print_json(out, &trajectory_metrics(&trajs, &examples, grouper, relevance, top_k))
        }
    }
}

fn write_jsonl(path: &Path, rows: impl Iterator<Item = serde_json::Value>) -> anyhow::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).with_context(|| path.display().to_string())?);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bench(cmd: BenchCmd, out: &mut dyn Write) -> anyhow::Result<()> {
    match cmd {
        BenchCmd::Construct { corpus, backend, config } => {
            let docs = ingest_jsonl(&corpus)?;
            let report = match backend {
                Backend::Logical => measure_logical(&docs)?.0,
                Backend::Hybrid => {
                    let config = load_config(config.as_deref().context("the hybrid backend needs --config for its embedding service")?)?;
                    let embedder = HttpEmbedder::new(config.embedding.clone())?;
                    measure_hybrid(&docs, &embedder, config.embedding.batch_size)?.0
                }
            };
            print_json(out, &report)
        }
        BenchCmd::Replay(args) => {
            let queries = if args.from_trajectories {
                workload_from_trajectories(&import_trajectories(&args.workload)?)
            } else {
                read_workload_jsonl(&args.workload)?
            };
            let backend = queries.first().map_or(Backend::Logical, |q| q.backend);
            let workload = ReplayWorkload { queries, warmup_count: args.warmup, concurrency_levels: args.concurrency };
            let reports = match (&args.url, &args.index) {
                (Some(url), _) => {
                    let target = HttpTarget::new(url, Duration::from_secs(args.timeout_secs)).map_err(anyhow::Error::msg)?;
                    replay_load(&workload, &target as &dyn LoadTarget, backend.as_str())?
                }
                (None, Some(dir)) => {
                    let retriever = LogicalRetriever::new(Arc::new(load_index(dir)?), Bm25Params::default());
                    replay_load(&workload, &InProcess(&retriever), backend.as_str())?
                }
                (None, None) => bail!("give --url or --index"),
            };
            print_json(out, &reports)
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Index(cmd) => cmd_index(cmd, out),
        Command::Search(args) => cmd_search(args, out),
        Command::Serve { config } => {
            let config = load_config(&config)?;
            let mut state = ServiceState { logical: Some(retriever_for(&config, Backend::Logical)?), hybrid: None };
            if config.service.hybrid {
                state.hybrid = Some(retriever_for(&config, Backend::Hybrid)?);
            }
            serve_blocking(&config.service.listen, state)?;
            Ok(())
        }
        Command::Agent(cmd) => cmd_agent(cmd, out),
        Command::Eval(cmd) => cmd_eval(cmd, out),
        Command::Bench(cmd) => cmd_bench(cmd, out),
    }
}

/// Parses `args` and runs; returns the process exit code. Usage errors
/// give 2, every other failure 1.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}
