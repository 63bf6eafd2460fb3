//! Ranking after first-stage retrieval.
//!
//! Stage order is fixed: dense pool → MMR → (dense list, BM25 list) → RRF →
//! truncate → post-score → late-interaction rerank → elbow filter →
//! optional normalized score floor. [`HybridRetriever`] runs the whole chain;
//! the individual stages are exposed as free functions.

mod filter;
mod mmr;
mod pipeline;
mod post;
mod rerank;
mod rrf;

use serde::{Deserialize, Serialize};

use crate::sparse::Bm25Params;

pub use filter::{elbow_filter, normalize_and_floor};
pub use mmr::mmr_select;
pub use pipeline::{
    build_dense_index, build_sparse_index, embed_corpus, HybridRetriever, PipelineError,
    RetrievalRun, StageHit,
};
pub use post::{keyword_boost, min_max, post_score, PostWeights, SummaryVectors};
pub use rerank::{maxsim, LateInteractionScorer};
pub use rrf::rrf_fuse;

/// A chunk reference in a ranked input list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedId {
    pub chunk_id: String,
    pub position: usize,
}

/// A fused candidate with every stage score it has accumulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub chunk_id: String,
    pub position: usize,
    pub dense_rank: Option<usize>,
    pub sparse_rank: Option<usize>,
    pub rrf_score: f64,
    pub mmr_selected: bool,
    pub summary_score: f64,
    pub keyword_boost: usize,
    pub post_score: f64,
    pub rerank_score: Option<f64>,
    pub final_rank: usize,
}

impl RankedCandidate {
    pub fn new(chunk_id: &str, position: usize) -> Self {
        Self {
            chunk_id: chunk_id.to_string(),
            position,
            dense_rank: None,
            sparse_rank: None,
            rrf_score: 0.0,
            mmr_selected: false,
            summary_score: 0.0,
            keyword_boost: 0,
            post_score: 0.0,
            rerank_score: None,
            final_rank: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Oversampled dense candidate pool fed to MMR.
    pub dense_pool: usize,
    /// MMR selections kept from the dense pool, and BM25 hits fed to fusion.
    pub top_k: usize,
    /// Fused candidates kept for post-scoring and reranking (`ce_keep_k`).
    pub keep_after_fusion: usize,
    pub rrf_k: usize,
    pub lambda_mmr: f64,
    pub post_weights: PostWeights,
    pub rerank: bool,
    pub elbow_threshold: f64,
    pub score_floor: Option<f64>,
    /// Dense hits at or below this cosine never enter the pool.
    pub dense_min_score: Option<f64>,
    pub bm25: Bm25Params,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dense_pool: 50,
            top_k: 10,
            keep_after_fusion: 10,
            rrf_k: 60,
            lambda_mmr: 0.6,
            post_weights: PostWeights::default(),
            rerank: true,
            elbow_threshold: 0.8,
            score_floor: None,
            dense_min_score: Some(0.0),
            bm25: Bm25Params::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("dense_pool", self.dense_pool),
            ("top_k", self.top_k),
            ("keep_after_fusion", self.keep_after_fusion),
            ("rrf_k", self.rrf_k),
        ] {
            if v < 1 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda_mmr) {
            return Err("lambda_mmr must lie in [0, 1]".into());
        }
        if let Some(f) = self.score_floor {
            if !(0.0..=1.0).contains(&f) {
                return Err("score_floor must lie in [0, 1]".into());
            }
        }
        if !self.elbow_threshold.is_finite() || self.elbow_threshold < 0.0 {
            return Err("elbow_threshold must be a non-negative number".into());
        }
        Ok(())
    }
}
