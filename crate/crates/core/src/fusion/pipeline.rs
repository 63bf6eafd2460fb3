use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::Corpus;
use crate::dense::{DenseBackend, DenseError, DenseHit, DenseIndex, HnswParams, IndexEntry};
use crate::embedding::{l2_normalize, Embedding, EmbeddingError, Encoder};
use crate::sparse::{SparseError, SparseIndex};

use super::{
    elbow_filter, mmr_select, normalize_and_floor, post_score, rrf_fuse, LateInteractionScorer,
    PipelineConfig, RankedCandidate, RankedId, SummaryVectors,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("index does not match the loaded corpus or encoder: {0}")]
    StaleIndex(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHit {
    pub chunk_id: String,
    pub position: usize,
    pub score: f64,
}

/// Every intermediate list of one retrieval, plus the final ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRun {
    pub query: String,
    /// False when the query embedded to zero and retrieval fell back to BM25 only.
    pub dense_used: bool,
    pub dense_hits: Vec<StageHit>,
    pub mmr_selection: Vec<String>,
    pub sparse_hits: Vec<StageHit>,
    /// Fused candidates in final order, `final_rank` 1-based.
    pub candidates: Vec<RankedCandidate>,
    /// Candidates surviving the elbow filter and score floor (a prefix).
    pub kept: usize,
}

impl RetrievalRun {
    pub fn evidence(&self) -> &[RankedCandidate] {
        &self.candidates[..self.kept]
    }

    pub fn evidence_ids(&self) -> Vec<String> {
        self.evidence().iter().map(|c| c.chunk_id.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.kept == 0
    }
}

/// The full hybrid retrieval chain over one immutable corpus.
pub struct HybridRetriever {
    corpus: Arc<Corpus>,
    encoder: Arc<dyn Encoder>,
    dense: Option<DenseIndex>,
    sparse: SparseIndex,
    summaries: SummaryVectors,
    late: LateInteractionScorer,
    config: PipelineConfig,
}

impl std::fmt::Debug for HybridRetriever {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HybridRetriever")
            .field("chunks", &self.corpus.len())
            .field("encoder", &self.encoder.spec().name)
            .field("dense_rows", &self.dense.as_ref().map_or(0, DenseIndex::len))
            .field("config", &self.config)
            .finish()
    }
}

/// Embeds every chunk's retrieval string; zero embeddings are left out.
pub fn embed_corpus(corpus: &Corpus, encoder: &dyn Encoder) -> Result<Vec<IndexEntry>, EmbeddingError> {
    let mut entries = Vec::with_capacity(corpus.len());
    for (pos, chunk) in corpus.chunks().iter().enumerate() {
        let raw = encoder.encode(corpus.retrieval_string(pos).unwrap_or_default())?;
        match l2_normalize(&raw) {
            Ok(embedding) => entries.push(IndexEntry {
                chunk_id: chunk.chunk_id.clone(),
                position: pos,
                embedding,
            }),
            Err(EmbeddingError::ZeroVector) => {
                warn!(chunk_id = %chunk.chunk_id, "zero embedding; chunk excluded from dense index");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(entries)
}

pub fn build_dense_index(
    corpus: &Corpus,
    encoder: &dyn Encoder,
    backend: DenseBackend,
    params: HnswParams,
) -> Result<Option<DenseIndex>, PipelineError> {
    let entries = embed_corpus(corpus, encoder)?;
    if entries.is_empty() {
        return Ok(None);
    }
    Ok(Some(DenseIndex::build(
        entries,
        backend,
        params,
        &encoder.spec().name,
        corpus.fingerprint(),
    )?))
}

pub fn build_sparse_index(corpus: &Corpus, config: &PipelineConfig) -> Result<SparseIndex, SparseError> {
    let ids = corpus.chunks().iter().map(|c| c.chunk_id.clone()).collect();
    SparseIndex::build(ids, corpus.retrieval_strings(), config.bm25)
}

impl HybridRetriever {
    /// Builds dense and sparse indexes from scratch.
    pub fn build(
        corpus: Arc<Corpus>,
        encoder: Arc<dyn Encoder>,
        backend: DenseBackend,
        params: HnswParams,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        config.validate().map_err(PipelineError::Config)?;
        let dense = build_dense_index(&corpus, encoder.as_ref(), backend, params)?;
        let sparse = build_sparse_index(&corpus, &config)?;
        Self::from_parts(corpus, encoder, dense, sparse, config)
    }

    /// Assembles a retriever from prebuilt indexes, checking that they belong
    /// to this corpus and encoder.
    pub fn from_parts(
        corpus: Arc<Corpus>,
        encoder: Arc<dyn Encoder>,
        dense: Option<DenseIndex>,
        sparse: SparseIndex,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        config.validate().map_err(PipelineError::Config)?;
        if let Some(d) = &dense {
            if d.corpus_fingerprint() != corpus.fingerprint() {
                return Err(PipelineError::StaleIndex(format!(
                    "dense index fingerprint {} != corpus {}",
                    d.corpus_fingerprint(),
                    corpus.fingerprint()
                )));
            }
            let spec = encoder.spec();
            if d.encoder() != spec.name || d.dim() != spec.dimension {
                return Err(PipelineError::StaleIndex(format!(
                    "dense index built with {} (d={}), query encoder is {} (d={})",
                    d.encoder(),
                    d.dim(),
                    spec.name,
                    spec.dimension
                )));
            }
        }
        let ids_match = sparse.ids().len() == corpus.len()
            && sparse
                .ids()
                .iter()
                .zip(corpus.chunks())
                .all(|(id, c)| *id == c.chunk_id);
        if !ids_match {
            return Err(PipelineError::StaleIndex(
                "sparse index ids do not match corpus".into(),
            ));
        }
        let summaries = SummaryVectors::build(&corpus, encoder.as_ref())?;
        let late = LateInteractionScorer::new(Arc::clone(&encoder));
        Ok(Self {
            corpus,
            encoder,
            dense,
            sparse,
            summaries,
            late,
            config,
        })
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Arc<dyn Encoder> {
        &self.encoder
    }

    pub fn dense(&self) -> Option<&DenseIndex> {
        self.dense.as_ref()
    }

    pub fn sparse(&self) -> &SparseIndex {
        &self.sparse
    }

    pub fn late_interaction(&self) -> &LateInteractionScorer {
        &self.late
    }

    pub fn retrieve(&self, query: &str) -> Result<RetrievalRun, PipelineError> {
        self.retrieve_with(query, &self.config)
    }

    /// Runs the chain with per-request overrides of the configuration.
    pub fn retrieve_with(&self, query: &str, config: &PipelineConfig) -> Result<RetrievalRun, PipelineError> {
        config.validate().map_err(PipelineError::Config)?;
        let query_vec: Option<Embedding> = match l2_normalize(&self.encoder.encode(query)?) {
            Ok(v) => Some(v),
            Err(EmbeddingError::ZeroVector) => None,
            Err(e) => return Err(e.into()),
        };

        let mut dense_hits: Vec<DenseHit> = Vec::new();
        if let (Some(index), Some(q)) = (&self.dense, &query_vec) {
            dense_hits = index.search(q, config.dense_pool)?;
            if let Some(min) = config.dense_min_score {
                dense_hits.retain(|h| f64::from(h.score) > min);
            }
        }

        let mmr_selection: Vec<RankedId> = match (&self.dense, &query_vec) {
            (Some(index), Some(q)) if !dense_hits.is_empty() => {
                let vectors: Vec<&[f32]> = dense_hits
                    .iter()
                    .map(|h| index.reconstruct(h.position).expect("dense hit is indexed"))
                    .collect();
                mmr_select(&vectors, &q.values, config.lambda_mmr, config.top_k)
                    .into_iter()
                    .map(|i| RankedId {
                        chunk_id: dense_hits[i].chunk_id.clone(),
                        position: dense_hits[i].position,
                    })
                    .collect()
            }
            _ => Vec::new(),
        };

        let sparse_hits = self.sparse.search(query, config.top_k)?;
        let sparse_list: Vec<RankedId> = sparse_hits
            .iter()
            .map(|h| RankedId {
                chunk_id: h.chunk_id.clone(),
                position: h.position,
            })
            .collect();

        let mut fused = rrf_fuse(&mmr_selection, &sparse_list, config.rrf_k);
        fused.truncate(config.keep_after_fusion);
        for c in &mut fused {
            c.mmr_selected = c.dense_rank.is_some();
        }

        let scored = post_score(
            fused,
            query,
            query_vec.as_ref().map(|v| v.values.as_slice()),
            &self.corpus,
            &self.summaries,
            config.post_weights,
        );
        let mut ranked = if config.rerank {
            self.late.rerank(scored, query, &self.corpus)?
        } else {
            scored
        };
        for (i, c) in ranked.iter_mut().enumerate() {
            c.final_rank = i + 1;
        }

        let filter_scores: Vec<f64> = ranked
            .iter()
            .map(|c| match (config.rerank, c.rerank_score) {
                (true, Some(r)) => r,
                _ => c.post_score,
            })
            .collect();
        let mut kept = elbow_filter(&filter_scores, config.elbow_threshold);
        if config.score_floor.is_some() && kept > 0 {
            kept = normalize_and_floor(&filter_scores[..kept], config.score_floor).len();
        }

        Ok(RetrievalRun {
            query: query.to_string(),
            dense_used: query_vec.is_some() && self.dense.is_some(),
            dense_hits: dense_hits
                .iter()
                .map(|h| StageHit {
                    chunk_id: h.chunk_id.clone(),
                    position: h.position,
                    score: f64::from(h.score),
                })
                .collect(),
            mmr_selection: mmr_selection.into_iter().map(|r| r.chunk_id).collect(),
            sparse_hits: sparse_hits
                .into_iter()
                .map(|h| StageHit {
                    chunk_id: h.chunk_id,
                    position: h.position,
                    score: h.score,
                })
                .collect(),
            candidates: ranked,
            kept,
        })
    }
}
