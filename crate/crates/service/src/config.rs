//! Run configuration, loaded from TOML. Relative paths resolve against the
//! directory holding the config file. Credentials never live in the file:
//! the backend reads its key from the environment variable named by
//! `backend.api_key_env`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use regrag_core::context::audit::RunSnapshot;
use regrag_core::context::{DEFAULT_BUDGET, NO_CONTEXT};
use regrag_core::dense::{DenseBackend, HnswParams};
use regrag_core::embedding::{EncoderRegistry, Encoder, DEFAULT_DIMENSION, HASHING_ENCODER};
use regrag_core::fusion::PipelineConfig;
use regrag_core::generation::mock::ContractMock;
use regrag_core::generation::openai::OpenAiCompatBackend;
use regrag_core::generation::{GenerationBackend, GenerationParams, PromptSet, DEFAULT_MAX_SUBQUERIES};
use regrag_core::indicators::{IndicatorCatalog, DEFAULT_RUNS};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub name: String,
    pub dimension: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            name: HASHING_ENCODER.to_string(),
            dimension: DEFAULT_DIMENSION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Deterministic contract-following mock; no network.
    #[default]
    Mock,
    OpenaiCompatible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub name: String,
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            name: "mock".into(),
            kind: BackendKind::Mock,
            endpoint: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: "REGRAG_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

fn default_index_dir() -> PathBuf {
    PathBuf::from("regrag-index")
}

fn default_audit_path() -> PathBuf {
    PathBuf::from("regrag-audit/audit.jsonl")
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_subqueries() -> usize {
    DEFAULT_MAX_SUBQUERIES
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

fn default_ttl() -> u64 {
    1800
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    #[serde(default = "default_index_dir")]
    pub index_dir: PathBuf,
    #[serde(default = "default_audit_path")]
    pub audit_path: PathBuf,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub dense_backend: DenseBackend,
    #[serde(default)]
    pub hnsw: HnswParams,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Context budget in characters.
    #[serde(default = "default_budget")]
    pub context_budget: usize,
    #[serde(default = "default_subqueries")]
    pub max_subqueries: usize,
    #[serde(default = "default_runs")]
    pub indicator_runs: usize,
    #[serde(default = "default_ttl")]
    pub session_ttl_secs: u64,
    pub prompts_dir: Option<PathBuf>,
    pub indicator_catalog: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults around a corpus path.
    pub fn for_corpus(corpus: &Path) -> Self {
        Self {
            corpus: corpus.to_path_buf(),
            index_dir: default_index_dir(),
            audit_path: default_audit_path(),
            encoder: EncoderConfig::default(),
            dense_backend: DenseBackend::default(),
            hnsw: HnswParams::default(),
            pipeline: PipelineConfig::default(),
            generation: GenerationParams::default(),
            backend: BackendConfig::default(),
            context_budget: DEFAULT_BUDGET,
            max_subqueries: DEFAULT_MAX_SUBQUERIES,
            indicator_runs: DEFAULT_RUNS,
            session_ttl_secs: default_ttl(),
            prompts_dir: None,
            indicator_catalog: None,
        }
    }

    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ServiceError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.index_dir);
        fix(&mut self.audit_path);
        if let Some(p) = self.prompts_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.indicator_catalog.as_mut() {
            fix(p);
        }
    }

    /// Fails fast on missing inputs and out-of-range parameters.
    pub fn validate(&self) -> Result<(), ServiceError> {
        if !self.corpus.is_file() {
            return Err(ServiceError::Config(format!(
                "corpus file {} does not exist",
                self.corpus.display()
            )));
        }
        for p in [&self.prompts_dir, &self.indicator_catalog].into_iter().flatten() {
            if !p.exists() {
                return Err(ServiceError::Config(format!("{} does not exist", p.display())));
            }
        }
        self.pipeline.validate().map_err(ServiceError::Config)?;
        self.generation.validate()?;
        if self.context_budget < NO_CONTEXT.len() {
            return Err(ServiceError::Config(format!(
                "context_budget must be at least {}",
                NO_CONTEXT.len()
            )));
        }
        if self.max_subqueries == 0 || self.indicator_runs == 0 {
            return Err(ServiceError::Config(
                "max_subqueries and indicator_runs must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> RunSnapshot {
        RunSnapshot {
            pipeline: self.pipeline.clone(),
            encoder: self.encoder.name.clone(),
            dense_backend: self.dense_backend,
            hnsw: self.hnsw,
            context_budget: self.context_budget,
            generation: Some(self.generation.clone()),
            backend: Some(self.backend.name.clone()),
        }
    }

    pub fn encoder(&self) -> Result<Arc<dyn Encoder>, ServiceError> {
        let registry = EncoderRegistry::with_defaults(self.encoder.dimension)
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        registry
            .get(&self.encoder.name)
            .map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn generation_backend(&self) -> Result<Arc<dyn GenerationBackend>, ServiceError> {
        let b = &self.backend;
        Ok(match b.kind {
            BackendKind::Mock => Arc::new(ContractMock::new(&b.name)),
            BackendKind::OpenaiCompatible => Arc::new(OpenAiCompatBackend::from_env(
                &b.name,
                &b.endpoint,
                &b.model,
                &b.api_key_env,
                Duration::from_secs(b.timeout_secs),
            )?),
        })
    }

    pub fn prompts(&self) -> Result<PromptSet, ServiceError> {
        match &self.prompts_dir {
            Some(dir) => Ok(PromptSet::load_dir(dir)?),
            None => Ok(PromptSet::default()),
        }
    }

    pub fn catalog(&self) -> Result<IndicatorCatalog, ServiceError> {
        match &self.indicator_catalog {
            Some(p) => Ok(IndicatorCatalog::from_path(p)?),
            None => Ok(IndicatorCatalog::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_gets_defaults_and_resolved_paths() {
        let cfg = RunConfig::from_toml_str("corpus = \"c.json\"\n", Path::new("/base")).unwrap();
        assert_eq!(cfg.corpus, Path::new("/base/c.json"));
        assert_eq!(cfg.index_dir, Path::new("/base/regrag-index"));
        assert_eq!(cfg.pipeline, PipelineConfig::default());
        assert_eq!(cfg.generation, GenerationParams::default());
        assert_eq!(cfg.context_budget, 12_000);
        assert_eq!(cfg.backend.kind, BackendKind::Mock);
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let text = "corpus = \"/abs/c.json\"\n[pipeline]\ntop_k = 5\n[backend]\nkind = \"openai_compatible\"\nname = \"remote\"\n";
        let cfg = RunConfig::from_toml_str(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.corpus, Path::new("/abs/c.json"));
        assert_eq!(cfg.pipeline.top_k, 5);
        assert_eq!(cfg.pipeline.dense_pool, 50);
        assert_eq!(cfg.backend.kind, BackendKind::OpenaiCompatible);
        assert!(RunConfig::from_toml_str("corpus = \"c\"\napi_key = \"x\"\n", Path::new(".")).is_err());
    }

    #[test]
    fn missing_corpus_fails_validation() {
        let cfg = RunConfig::for_corpus(Path::new("/definitely/not/here.json"));
        assert!(matches!(cfg.validate(), Err(ServiceError::Config(_))));
    }

    #[test]
    fn missing_credentials_fail_fast() {
        let mut cfg = RunConfig::for_corpus(Path::new("c.json"));
        cfg.backend.kind = BackendKind::OpenaiCompatible;
        cfg.backend.api_key_env = "REGRAG_CONFIG_TEST_UNSET".into();
        std::env::remove_var("REGRAG_CONFIG_TEST_UNSET");
        let err = cfg.generation_backend().err().unwrap();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("REGRAG_CONFIG_TEST_UNSET"));
    }
}
