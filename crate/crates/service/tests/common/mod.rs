#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use regrag_core::generation::GenerationBackend;
use regrag_service::cli::cmd_build_index;
use regrag_service::config::RunConfig;
use regrag_service::engine::Engine;
use regrag_service::index_store::load_index;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Config over the fixture corpus with index and audit inside `dir`.
pub fn config_in(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::for_corpus(&fixture("corpus.json"));
    cfg.index_dir = dir.join("index");
    cfg.audit_path = dir.join("audit/audit.jsonl");
    cfg
}

pub fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("regrag.toml");
    std::fs::write(&path, toml::to_string(cfg).unwrap()).unwrap();
    path
}

pub fn built(dir: &Path) -> RunConfig {
    let cfg = config_in(dir);
    cmd_build_index(&cfg, &mut Vec::new()).unwrap();
    cfg
}

/// Fixture engine with the contract-following mock.
pub fn engine(dir: &Path) -> Engine {
    Engine::load(built(dir)).unwrap()
}

/// Fixture engine over a custom backend, loading the persisted index.
pub fn engine_with(dir: &Path, backend: Arc<dyn GenerationBackend>) -> Engine {
    let cfg = built(dir);
    let corpus = Arc::new(regrag_core::corpus::load_corpus(&cfg.corpus).unwrap());
    let retriever = load_index(&cfg.index_dir, corpus, cfg.encoder().unwrap(), cfg.dense_backend, cfg.pipeline.clone())
        .unwrap();
    Engine::from_parts(cfg, retriever, backend).unwrap()
}
