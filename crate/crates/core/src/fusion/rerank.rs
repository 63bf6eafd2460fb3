//! Late-interaction (MaxSim) reranking.
//!
//! Query and document are embedded token by token; the score is the sum over
//! query tokens of the best cosine against any document token. Document token
//! matrices are cached by corpus position and reused across queries.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::corpus::Corpus;
use crate::embedding::{dot, l2_normalize, EmbeddingError, Encoder};
use crate::sparse::tokenize;

use super::RankedCandidate;

type TokenMatrix = Arc<Vec<Vec<f32>>>;

pub struct LateInteractionScorer {
    encoder: Arc<dyn Encoder>,
    cache: RwLock<HashMap<usize, TokenMatrix>>,
}

impl std::fmt::Debug for LateInteractionScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LateInteractionScorer")
            .field("encoder", &self.encoder.spec().name)
            .field("cached_docs", &self.cache.read().map(|c| c.len()).unwrap_or(0))
            .finish()
    }
}

impl LateInteractionScorer {
    pub fn new(encoder: Arc<dyn Encoder>) -> Self {
        Self {
            encoder,
            cache: RwLock::new(HashMap::new()),
        }
    }

    /// Unit embedding per distinct token; zero embeddings are skipped and
    /// identical vectors kept once.
    pub fn token_embeddings(&self, text: &str) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let mut out: Vec<Vec<f32>> = Vec::new();
        let mut seen_tokens = std::collections::HashSet::new();
        for tok in tokenize(text) {
            if !seen_tokens.insert(tok.clone()) {
                continue;
            }
            let raw = self.encoder.encode(&tok)?;
            let unit = match l2_normalize(&raw) {
                Ok(v) => v.values,
                Err(EmbeddingError::ZeroVector) => continue,
                Err(e) => return Err(e),
            };
            if !out.contains(&unit) {
                out.push(unit);
            }
        }
        Ok(out)
    }

    fn doc_tokens(&self, position: usize, text: &str) -> Result<TokenMatrix, EmbeddingError> {
        if let Some(hit) = self.cache.read().expect("cache lock").get(&position) {
            return Ok(Arc::clone(hit));
        }
        let matrix = Arc::new(self.token_embeddings(text)?);
        self.cache
            .write()
            .expect("cache lock")
            .entry(position)
            .or_insert_with(|| Arc::clone(&matrix));
        Ok(matrix)
    }

    pub fn cached_docs(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    pub fn score(&self, query: &str, document: &str) -> Result<f64, EmbeddingError> {
        let q = self.token_embeddings(query)?;
        let d = self.token_embeddings(document)?;
        Ok(maxsim(&q, &d))
    }

    /// Scores each candidate against its chunk retrieval string and re-sorts:
    /// rerank score descending, then post score, then corpus position.
    pub fn rerank(
        &self,
        mut candidates: Vec<RankedCandidate>,
        query: &str,
        corpus: &Corpus,
    ) -> Result<Vec<RankedCandidate>, EmbeddingError> {
        let q = self.token_embeddings(query)?;
        for c in &mut candidates {
            let text = corpus.retrieval_string(c.position).unwrap_or_default();
            let doc = self.doc_tokens(c.position, text)?;
            c.rerank_score = Some(maxsim(&q, &doc));
        }
        candidates.sort_by(|a, b| {
            let ra = a.rerank_score.unwrap_or(0.0);
            let rb = b.rerank_score.unwrap_or(0.0);
            rb.total_cmp(&ra)
                .then(b.post_score.total_cmp(&a.post_score))
                .then(a.position.cmp(&b.position))
        });
        Ok(candidates)
    }
}

/// `Σ_{q} max_{d} q·d`; zero when either side has no tokens.
pub fn maxsim(query_tokens: &[Vec<f32>], doc_tokens: &[Vec<f32>]) -> f64 {
    if doc_tokens.is_empty() {
        return 0.0;
    }
    query_tokens
        .iter()
        .map(|q| {
            doc_tokens
                .iter()
                .map(|d| dot(q, d))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}
