use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::json;

use regrag_core::context::assemble_from_run;
use regrag_core::corpus::load_corpus;
use regrag_core::eval::{
    classify_grounding, evaluate_retrieval, load_eval_queries, GroundingSummary, RetrievalReport,
    DEFAULT_OVERLAP_THRESHOLD,
};
use regrag_core::generation::ReasoningEffort;

use crate::config::RunConfig;
use crate::engine::{Engine, QueryFlags, QueryResponse};
use crate::error::ServiceError;
use crate::http::{serve, AppState};
use crate::index_store::build_index;

#[derive(Debug, Parser)]
#[command(name = "regrag", version, about = "Hybrid retrieval and grounded answering over a regulatory corpus")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true, env = "REGRAG_CONFIG", default_value = "regrag.toml")]
    pub config: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and persist the dense and BM25 indexes for the configured corpus.
    BuildIndex,
    /// Answer one question and print the answer with its sources.
    Query {
        question: String,
        #[arg(long)]
        top_k: Option<usize>,
        /// Fused candidates kept for post-scoring and reranking (ce_keep_k).
        #[arg(long)]
        keep_k: Option<usize>,
        /// Rewrite the question into sub-queries first.
        #[arg(long)]
        preprocess: bool,
        #[arg(long)]
        stream: bool,
        #[arg(long)]
        reasoning_effort: Option<ReasoningEffort>,
        /// Print the full response as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Compute early-assessment indicators for an operation description.
    Indicators {
        /// JSON file with the five operation fields.
        #[arg(long)]
        op: PathBuf,
        /// Indicator to compute; repeat for several. Defaults to all.
        #[arg(long = "indicator")]
        indicators: Vec<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Retrieval metrics (and optionally answer grounding) over a query set.
    Eval {
        #[arg(long)]
        queries: PathBuf,
        /// Also generate answers and label their grounding.
        #[arg(long)]
        grounding: bool,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), ServiceError> {
    let config = RunConfig::load(&cli.config)?;
    match cli.command {
        Command::BuildIndex => cmd_build_index(&config, out),
        Command::Query {
            question,
            top_k,
            keep_k,
            preprocess,
            stream,
            reasoning_effort,
            json,
        } => {
            let flags = QueryFlags {
                top_k,
                keep_k,
                preprocess,
                reasoning_effort,
            };
            cmd_query(&Engine::load(config)?, &question, &flags, stream, json, out)
        }
        Command::Indicators {
            op,
            indicators,
            runs,
            export,
        } => cmd_indicators(&Engine::load(config)?, &op, &indicators, runs, export.as_deref(), out),
        Command::Eval {
            queries,
            grounding,
            json_out,
        } => cmd_eval(&Engine::load(config)?, &queries, grounding, json_out.as_deref(), out),
        Command::Serve { addr } => {
            let engine = Arc::new(Engine::load(config)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| ServiceError::Internal(e.to_string()))?;
            rt.block_on(serve(AppState::new(engine), &addr))
        }
    }
}

fn io_err(e: std::io::Error) -> ServiceError {
    ServiceError::Internal(format!("cannot write output: {e}"))
}

pub fn cmd_build_index(config: &RunConfig, out: &mut dyn Write) -> Result<(), ServiceError> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus)?;
    let encoder = config.encoder()?;
    let m = build_index(
        &config.index_dir,
        &corpus,
        encoder.as_ref(),
        config.dense_backend,
        config.hnsw,
        &config.pipeline,
    )?;
    writeln!(
        out,
        "indexed {} chunks ({} dense rows) into {}\ncorpus fingerprint {}",
        m.chunk_count,
        m.dense_rows,
        config.index_dir.display(),
        m.corpus_fingerprint
    )
    .map_err(io_err)
}

pub fn render_sources(resp: &QueryResponse) -> String {
    let mut s = String::from("Sources:\n");
    if resp.sources.is_empty() {
        s.push_str("  (none)\n");
    }
    for src in &resp.sources {
        let cited = if resp.citations.contains(&src.chunk_index) { "*" } else { " " };
        s.push_str(&format!(
            " {cited}[{}] {} | {} | {} p.{}\n",
            src.chunk_index, src.chunk_id, src.source_file, src.section_title, src.page
        ));
    }
    s.push_str(&format!("audit: {}\n", resp.audit_id));
    s
}

pub fn cmd_query(
    engine: &Engine,
    question: &str,
    flags: &QueryFlags,
    stream: bool,
    as_json: bool,
    out: &mut dyn Write,
) -> Result<(), ServiceError> {
    let resp = if stream && !as_json {
        let mut write_err = None;
        let mut cb = |delta: &str| {
            if write_err.is_none() {
                if let Err(e) = out.write_all(delta.as_bytes()).and_then(|_| out.flush()) {
                    write_err = Some(e);
                }
            }
        };
        let resp = engine.answer(question, flags, &[], Some(&mut cb))?;
        if let Some(e) = write_err {
            return Err(io_err(e));
        }
        writeln!(out).map_err(io_err)?;
        resp
    } else {
        let resp = engine.answer(question, flags, &[], None)?;
        if !as_json {
            writeln!(out, "{}", resp.answer).map_err(io_err)?;
        }
        resp
    };
    if as_json {
        let text = serde_json::to_string_pretty(&resp).map_err(|e| ServiceError::Internal(e.to_string()))?;
        writeln!(out, "{text}").map_err(io_err)
    } else {
        write!(out, "\n{}", render_sources(&resp)).map_err(io_err)
    }
}

pub fn cmd_indicators(
    engine: &Engine,
    op_path: &Path,
    names: &[String],
    runs: Option<usize>,
    export: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), ServiceError> {
    let text = std::fs::read_to_string(op_path)
        .map_err(|e| ServiceError::Validation(format!("cannot read {}: {e}", op_path.display())))?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| ServiceError::Validation(format!("{} is not valid JSON: {e}", op_path.display())))?;
    let resp = engine.indicators(&raw, names, runs)?;
    if let Some(path) = export {
        resp.report.export_json(path)?;
    }
    let text = serde_json::to_string_pretty(&resp).map_err(|e| ServiceError::Internal(e.to_string()))?;
    writeln!(out, "{text}").map_err(io_err)
}

pub fn cmd_eval(
    engine: &Engine,
    queries_path: &Path,
    grounding: bool,
    json_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), ServiceError> {
    let queries = load_eval_queries(queries_path)?;
    let outcomes = evaluate_retrieval(&queries, engine.retriever())?;
    let report = RetrievalReport::from_outcomes(&outcomes)?;
    writeln!(out, "{}", report.render_table()).map_err(io_err)?;
    let mut doc = json!({"retrieval": report.to_json()});

    if grounding {
        let corpus = engine.retriever().corpus();
        let mut labels = Vec::with_capacity(queries.len());
        for q in &queries {
            let run = engine.retriever().retrieve(&q.query)?;
            let bundle = assemble_from_run(&run, corpus, engine.config().context_budget);
            let resp = engine.answer(&q.query, &QueryFlags::default(), &[], None)?;
            let label = classify_grounding(
                &resp.answer,
                &bundle,
                corpus,
                &q.ground_truth_chunk_id,
                DEFAULT_OVERLAP_THRESHOLD,
            )?;
            labels.push((q.variant, label));
        }
        let summary = GroundingSummary::by_variant(&labels);
        writeln!(out, "\nvariant    answers  grounded  unsupported  incomplete  chunk_used").map_err(io_err)?;
        for s in &summary {
            writeln!(
                out,
                "{:<10} {:>7}  {:>8.1}  {:>11.1}  {:>10.1}  {:>10.1}",
                s.variant.label(),
                s.answers,
                s.grounded,
                s.unsupported,
                s.incomplete,
                s.chunk_used
            )
            .map_err(io_err)?;
        }
        doc["grounding"] = serde_json::to_value(&summary).map_err(|e| ServiceError::Internal(e.to_string()))?;
    }

    if let Some(path) = json_out {
        let text = serde_json::to_string_pretty(&doc).map_err(|e| ServiceError::Internal(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| ServiceError::Export(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
