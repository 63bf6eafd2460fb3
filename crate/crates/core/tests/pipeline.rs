mod common;

use regrag_core::context::audit::{replay, AuditRecord, AuditStore, RecordKind, RunSnapshot};
use regrag_core::context::{assemble_from_run, DEFAULT_BUDGET, NO_CONTEXT};
use regrag_core::dense::{DenseBackend, HnswParams};
use regrag_core::eval::{evaluate_retrieval, load_eval_queries, RetrievalReport, Variant};
use regrag_core::fusion::PipelineConfig;

#[test]
fn direct_title_queries_rank_their_chunk_first() {
    let r = common::retriever();
    for chunk in r.corpus().chunks() {
        let run = r.retrieve(&chunk.chunk_title).unwrap();
        assert!(!run.is_empty(), "{} retrieved nothing", chunk.chunk_id);
        assert_eq!(run.evidence()[0].chunk_id, chunk.chunk_id, "query {:?}", chunk.chunk_title);
    }
}

#[test]
fn retrieval_is_deterministic_and_ranks_are_consistent() {
    let r = common::retriever();
    let q = "ground risk buffer for BVLOS over populated areas";
    let a = r.retrieve(q).unwrap();
    let b = common::retriever().retrieve(q).unwrap();
    assert_eq!(a, b);
    for (i, c) in a.candidates.iter().enumerate() {
        assert_eq!(c.final_rank, i + 1);
        assert!(c.dense_rank.is_some() || c.sparse_rank.is_some());
    }
    assert!(a.kept <= a.candidates.len());
    assert!(a.candidates.len() <= PipelineConfig::default().keep_after_fusion);
}

#[test]
fn empty_retrieval_yields_no_context() {
    let r = common::retriever();
    for q in ["???", "xylophone zeppelin"] {
        let run = r.retrieve(q).unwrap();
        assert!(run.is_empty(), "{q:?} retrieved {:?}", run.evidence_ids());
        let bundle = assemble_from_run(&run, r.corpus(), DEFAULT_BUDGET);
        assert_eq!(bundle.context_text, NO_CONTEXT);
    }
    assert!(!r.retrieve("???").unwrap().dense_used);
}

#[test]
fn sources_resolve_to_loaded_chunks() {
    let r = common::retriever();
    let run = r.retrieve("standard scenario declaration").unwrap();
    let bundle = assemble_from_run(&run, r.corpus(), DEFAULT_BUDGET);
    assert!(!bundle.is_empty());
    assert_eq!(bundle.included_ids, run.evidence_ids()[..bundle.included_ids.len()]);
    for s in &bundle.sources {
        let chunk = r.corpus().chunk(s.chunk_index).unwrap();
        assert_eq!(chunk.chunk_id, s.chunk_id);
        assert_eq!(chunk.page, s.page);
        assert_eq!(chunk.section_title, s.section_title);
        assert!(bundle.context_text.contains(&format!("[{}] {}, page {}", s.chunk_index, chunk.chunk_title, chunk.page)));
    }
}

#[test]
fn hnsw_backend_agrees_on_small_corpus() {
    let flat = common::retriever();
    let hnsw = common::retriever_with(DenseBackend::Hnsw, PipelineConfig::default());
    for q in ["initial air risk class", "remote pilot training"] {
        assert_eq!(flat.retrieve(q).unwrap().evidence_ids(), hnsw.retrieve(q).unwrap().evidence_ids());
    }
}

#[test]
fn rerank_disabled_uses_post_scores() {
    let cfg = PipelineConfig { rerank: false, ..PipelineConfig::default() };
    let r = common::retriever_with(DenseBackend::FlatExact, cfg);
    let run = r.retrieve("ground risk class table").unwrap();
    assert!(run.candidates.iter().all(|c| c.rerank_score.is_none()));
    assert!(run.candidates.windows(2).all(|w| w[0].post_score >= w[1].post_score));
}

#[test]
fn audit_replay_reproduces_included_ids() {
    let r = common::retriever();
    let dir = tempfile::tempdir().unwrap();
    let store = AuditStore::open(&dir.path().join("audit.jsonl")).unwrap();
    let snapshot = RunSnapshot {
        pipeline: r.config().clone(),
        encoder: r.encoder().spec().name.clone(),
        dense_backend: DenseBackend::FlatExact,
        hnsw: HnswParams::default(),
        context_budget: DEFAULT_BUDGET,
        generation: None,
        backend: None,
    };
    let run = r.retrieve("strategic mitigations air risk").unwrap();
    let bundle = assemble_from_run(&run, r.corpus(), DEFAULT_BUDGET);
    let rec = AuditRecord::new(RecordKind::Retrieval, &run.query.clone(), snapshot, r.corpus().fingerprint())
        .with_evidence(run, &bundle);
    let id = store.append(rec).unwrap();
    let stored = store.get(&id).unwrap().unwrap();
    assert!(stored.answer.is_none());
    assert_eq!(replay(&stored, &r).unwrap(), stored.included_ids);
}

#[test]
fn eval_fixture_runs_end_to_end() {
    let r = common::retriever();
    let queries = load_eval_queries(&common::fixture("eval_queries.json")).unwrap();
    let outcomes = evaluate_retrieval(&queries, &r).unwrap();
    let report = RetrievalReport::from_outcomes(&outcomes).unwrap();
    assert_eq!(report.overall.queries, queries.len());
    // Direct title matches are forced by construction of the fixture.
    assert_eq!(report.row(Variant::Direct).unwrap().hit(1), Some(100.0));
}
