#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use regrag_core::corpus::{load_corpus, Corpus};
use regrag_core::dense::{DenseBackend, HnswParams};
use regrag_core::embedding::{HashingEncoder, DEFAULT_DIMENSION};
use regrag_core::fusion::{HybridRetriever, PipelineConfig};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn corpus() -> Arc<Corpus> {
    Arc::new(load_corpus(fixture("corpus.json")).expect("fixture corpus loads"))
}

pub fn retriever_with(backend: DenseBackend, config: PipelineConfig) -> HybridRetriever {
    HybridRetriever::build(
        corpus(),
        Arc::new(HashingEncoder::new(DEFAULT_DIMENSION).unwrap()),
        backend,
        HnswParams::default(),
        config,
    )
    .expect("retriever builds")
}

pub fn retriever() -> HybridRetriever {
    retriever_with(DenseBackend::FlatExact, PipelineConfig::default())
}
