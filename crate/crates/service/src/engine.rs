//! The shared path from a question or an operation description to an
//! audited result. The CLI and the HTTP handlers both call into this.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::info;

use regrag_core::context::audit::{AuditRecord, AuditStore, RecordKind};
use regrag_core::context::{assemble_from_run, SourceRef};
use regrag_core::corpus::{load_corpus, Chunk};
use regrag_core::fusion::{HybridRetriever, PipelineConfig, RetrievalRun};
use regrag_core::generation::{
    build_chat_messages, generate_answer, generate_subqueries, GenerationBackend, GenerationParams,
    PromptSet, ReasoningEffort, ReasoningLevel, SubQuery, Turn, REFUSAL,
};
use regrag_core::indicators::{
    validate_operation_input, IndicatorCatalog, IndicatorEngine, IndicatorReport,
};

use crate::config::RunConfig;
use crate::error::ServiceError;
use crate::index_store::load_index;

/// Per-request overrides. `keep_k` is the number of fused candidates kept
/// for post-scoring and reranking (`ce_keep_k`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryFlags {
    pub top_k: Option<usize>,
    pub keep_k: Option<usize>,
    pub preprocess: bool,
    pub reasoning_effort: Option<ReasoningEffort>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer: String,
    pub sources: Vec<SourceRef>,
    pub citations: Vec<usize>,
    pub included_ids: Vec<String>,
    pub refused: bool,
    pub sub_queries: Vec<SubQuery>,
    pub audit_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorsResponse {
    #[serde(flatten)]
    pub report: IndicatorReport,
    pub audit_id: String,
}

pub struct Engine {
    config: RunConfig,
    retriever: HybridRetriever,
    backend: Arc<dyn GenerationBackend>,
    prompts: PromptSet,
    catalog: IndicatorCatalog,
    audit: AuditStore,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("retriever", &self.retriever)
            .field("backend", &self.backend.name())
            .field("audit", &self.audit.path())
            .finish_non_exhaustive()
    }
}

/// One answered (sub-)question before it is written to the audit log.
struct Answered {
    record: AuditRecord,
    answer: String,
    citations: Vec<usize>,
    sources: Vec<SourceRef>,
    included_ids: Vec<String>,
}

fn effort_for(level: ReasoningLevel) -> ReasoningEffort {
    match level {
        ReasoningLevel::None | ReasoningLevel::Low => ReasoningEffort::Low,
        ReasoningLevel::Medium => ReasoningEffort::Medium,
        ReasoningLevel::High => ReasoningEffort::High,
    }
}

impl Engine {
    /// Loads the corpus and the persisted index, builds the backend and
    /// opens the audit store. Fails fast on any missing piece.
    pub fn load(config: RunConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let backend = config.generation_backend()?;
        let prompts = config.prompts()?;
        let catalog = config.catalog()?;
        let corpus = Arc::new(load_corpus(&config.corpus)?);
        let retriever = load_index(
            &config.index_dir,
            corpus,
            config.encoder()?,
            config.dense_backend,
            config.pipeline.clone(),
        )?;
        let audit = AuditStore::open(&config.audit_path)?;
        info!(chunks = retriever.corpus().len(), backend = backend.name(), "engine ready");
        Ok(Self { config, retriever, backend, prompts, catalog, audit })
    }

    /// Assembles an engine around an already-built retriever and backend.
    pub fn from_parts(
        config: RunConfig,
        retriever: HybridRetriever,
        backend: Arc<dyn GenerationBackend>,
    ) -> Result<Self, ServiceError> {
        let prompts = config.prompts()?;
        let catalog = config.catalog()?;
        let audit = AuditStore::open(&config.audit_path)?;
        Ok(Self { config, retriever, backend, prompts, catalog, audit })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn retriever(&self) -> &HybridRetriever {
        &self.retriever
    }

    pub fn audit(&self) -> &AuditStore {
        &self.audit
    }

    pub fn catalog(&self) -> &IndicatorCatalog {
        &self.catalog
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.retriever.corpus().get(chunk_id)
    }

    pub fn pipeline_for(&self, flags: &QueryFlags) -> Result<PipelineConfig, ServiceError> {
        let mut cfg = self.config.pipeline.clone();
        if let Some(k) = flags.top_k {
            cfg.top_k = k;
        }
        if let Some(k) = flags.keep_k {
            cfg.keep_after_fusion = k;
        }
        cfg.validate().map_err(ServiceError::Validation)?;
        Ok(cfg)
    }

    fn params_for(&self, effort: Option<ReasoningEffort>) -> GenerationParams {
        let mut p = self.config.generation.clone();
        if let Some(e) = effort {
            p.reasoning_effort = e;
        }
        p
    }

    pub fn retrieve(&self, query: &str, flags: &QueryFlags) -> Result<RetrievalRun, ServiceError> {
        Ok(self.retriever.retrieve_with(query, &self.pipeline_for(flags)?)?)
    }

    fn answer_one(
        &self,
        kind: RecordKind,
        question: &str,
        pipeline: &PipelineConfig,
        params: &GenerationParams,
        history: &[Turn],
        on_delta: Option<&mut dyn FnMut(&str)>,
    ) -> Result<Answered, ServiceError> {
        let run = self.retriever.retrieve_with(question, pipeline)?;
        let bundle = assemble_from_run(&run, self.retriever.corpus(), self.config.context_budget);
        let messages = build_chat_messages(question, &bundle, history, &self.prompts);
        let generated = generate_answer(&messages, params, self.backend.as_ref(), on_delta)?;

        let mut snapshot = self.config.snapshot();
        snapshot.pipeline = pipeline.clone();
        snapshot.generation = Some(params.clone());
        let mut record = AuditRecord::new(kind, question, snapshot, self.retriever.corpus().fingerprint())
            .with_evidence(run, &bundle);
        record.answer = Some(generated.answer.clone());
        record.citations = generated.citations.clone();
        record.reasoning_trace = generated.reasoning_trace;
        Ok(Answered {
            record,
            answer: generated.answer,
            citations: generated.citations,
            sources: bundle.sources,
            included_ids: bundle.included_ids,
        })
    }

    /// Answers one question. With preprocessing, the question is rewritten
    /// into sub-queries that each run the full pipeline with fresh state;
    /// the parent record links one child record per sub-query.
    pub fn answer(
        &self,
        question: &str,
        flags: &QueryFlags,
        history: &[Turn],
        mut on_delta: Option<&mut dyn FnMut(&str)>,
    ) -> Result<QueryResponse, ServiceError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(ServiceError::Validation("question must not be empty".into()));
        }
        let pipeline = self.pipeline_for(flags)?;
        let params = self.params_for(flags.reasoning_effort);
        let fingerprint = self.retriever.corpus().fingerprint();

        if !flags.preprocess {
            let a = self.answer_one(RecordKind::Chat, question, &pipeline, &params, history, on_delta)?;
            let audit_id = self.audit.append(a.record)?;
            return Ok(QueryResponse {
                refused: a.answer.trim() == REFUSAL,
                answer: a.answer,
                sources: a.sources,
                citations: a.citations,
                included_ids: a.included_ids,
                sub_queries: Vec::new(),
                audit_id,
            });
        }

        let sub_queries = generate_subqueries(
            question,
            self.config.max_subqueries,
            self.backend.as_ref(),
            &self.prompts,
            &params,
        )?;
        let mut children = Vec::with_capacity(sub_queries.len());
        let mut combined = String::new();
        for (i, sq) in sub_queries.iter().enumerate() {
            let header = format!("{}### {}\n", if i == 0 { "" } else { "\n\n" }, sq.query);
            if let Some(cb) = on_delta.as_mut() {
                cb(&header);
            }
            combined.push_str(&header);
            let sub_params = self.params_for(flags.reasoning_effort.or(Some(effort_for(sq.reasoning_level))));
            let mut child = self.answer_one(
                RecordKind::SubQuery,
                &sq.query,
                &pipeline,
                &sub_params,
                history,
                on_delta.as_mut().map(|cb| &mut **cb as &mut dyn FnMut(&str)),
            )?;
            child.record.sub_queries = vec![sq.clone()];
            combined.push_str(&child.answer);
            children.push(child);
        }

        let mut sources: Vec<SourceRef> = Vec::new();
        let mut included_ids: Vec<String> = Vec::new();
        let mut citations = BTreeSet::new();
        for c in &children {
            for s in &c.sources {
                if !included_ids.contains(&s.chunk_id) {
                    included_ids.push(s.chunk_id.clone());
                    sources.push(s.clone());
                }
            }
            citations.extend(c.citations.iter().copied());
        }
        let citations: Vec<usize> = citations.into_iter().collect();
        let refused = !children.is_empty() && children.iter().all(|c| c.answer.trim() == REFUSAL);

        let mut snapshot = self.config.snapshot();
        snapshot.pipeline = pipeline;
        snapshot.generation = Some(params);
        let mut parent = AuditRecord::new(RecordKind::Chat, question, snapshot, fingerprint);
        parent.sub_queries = sub_queries.clone();
        parent.included_ids = included_ids.clone();
        parent.sources = sources.clone();
        parent.answer = Some(combined.clone());
        parent.citations = citations.clone();
        let audit_id = self.audit.append(parent)?;
        for mut c in children {
            c.record.parent_id = Some(audit_id.clone());
            self.audit.append(c.record)?;
        }
        Ok(QueryResponse {
            answer: combined,
            sources,
            citations,
            included_ids,
            refused,
            sub_queries,
            audit_id,
        })
    }

    /// Validates the operation description and runs each requested
    /// indicator. An empty `names` list runs the whole catalog.
    pub fn indicators(
        &self,
        op_raw: &serde_json::Value,
        names: &[String],
        runs: Option<usize>,
    ) -> Result<IndicatorsResponse, ServiceError> {
        let op = validate_operation_input(op_raw, &self.catalog.vocabulary).map_err(ServiceError::InvalidInput)?;
        let names: Vec<String> = if names.is_empty() {
            self.catalog.names().into_iter().map(str::to_string).collect()
        } else {
            names.to_vec()
        };
        for n in &names {
            self.catalog.spec(n)?;
        }
        let runs = runs.unwrap_or(self.config.indicator_runs);
        let engine = IndicatorEngine {
            retriever: &self.retriever,
            backend: self.backend.as_ref(),
            prompts: &self.prompts,
            catalog: &self.catalog,
            params: self.config.generation.clone(),
            budget: self.config.context_budget,
        };
        let outcomes = names
            .iter()
            .map(|n| engine.request_indicator(n, &op, runs))
            .collect::<Result<Vec<_>, _>>()?;

        let fingerprint = self.retriever.corpus().fingerprint();
        let op_json = serde_json::to_string(&op).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let results: Vec<_> = outcomes.iter().map(|o| o.result.clone()).collect();
        let report = IndicatorReport::new(op, results, &self.catalog.coherence_rules);

        let mut parent = AuditRecord::new(RecordKind::Indicator, &op_json, self.config.snapshot(), fingerprint);
        parent.indicator = Some(serde_json::to_value(&report).map_err(|e| ServiceError::Internal(e.to_string()))?);
        let audit_id = self.audit.append(parent)?;

        let mut report = report;
        for o in outcomes {
            let mut child = AuditRecord::new(RecordKind::Indicator, &o.query, self.config.snapshot(), fingerprint)
                .with_evidence(o.retrieval, &o.bundle);
            child.parent_id = Some(audit_id.clone());
            child.indicator = Some(serde_json::to_value(&o.result).map_err(|e| ServiceError::Internal(e.to_string()))?);
            let id = self.audit.append(child)?;
            if let Some(r) = report.indicators.get_mut(&o.result.name) {
                r.audit_id = Some(id);
            }
        }
        Ok(IndicatorsResponse { report, audit_id })
    }
}
