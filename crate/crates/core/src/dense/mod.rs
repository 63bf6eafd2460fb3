//! Maximum-inner-product search over unit-norm chunk embeddings.
//!
//! Two backends: an exact flat scan (the default, and the baseline every
//! approximate result is measured against) and an HNSW graph.

mod hnsw;
mod persist;

use serde::{Deserialize, Serialize};

use crate::embedding::{dot, Embedding};

pub use hnsw::{HnswGraph, HnswParams};

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum DenseError {
    #[error("dimension mismatch at position {position}: expected {expected}, found {found}")]
    DimensionMismatch {
        position: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector at position {0} is not unit-norm")]
    UnnormalizedVector(usize),
    #[error("dense index is empty")]
    EmptyIndex,
    #[error("{vectors} vectors but {ids} ids")]
    IdCountMismatch { vectors: usize, ids: usize },
    #[error("query is not unit-norm")]
    UnnormalizedQuery,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("dense index file is corrupted: {0}")]
    Corrupted(String),
    #[error("dense index I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DenseBackend {
    #[default]
    FlatExact,
    Hnsw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseHit {
    pub chunk_id: String,
    pub position: usize,
    pub score: f32,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    backend: DenseBackend,
    dim: usize,
    /// Row-major `n × dim`.
    vectors: Vec<f32>,
    ids: Vec<String>,
    /// Corpus position of each row; rows skip chunks whose embedding was zero.
    positions: Vec<usize>,
    encoder: String,
    corpus_fingerprint: String,
    params: HnswParams,
    graph: Option<HnswGraph>,
}

/// One row to index: the chunk id, its corpus position and its unit vector.
#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub position: usize,
    pub embedding: Embedding,
}

impl DenseIndex {
    pub fn build(
        entries: Vec<IndexEntry>,
        backend: DenseBackend,
        params: HnswParams,
        encoder: &str,
        corpus_fingerprint: &str,
    ) -> Result<Self, DenseError> {
        let mut entries = entries;
        entries.sort_by_key(|e| e.position);
        let Some(first) = entries.first() else {
            return Err(DenseError::EmptyIndex);
        };
        let dim = first.embedding.dim();
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        let mut ids = Vec::with_capacity(entries.len());
        let mut positions = Vec::with_capacity(entries.len());
        for (row, entry) in entries.into_iter().enumerate() {
            if entry.embedding.dim() != dim {
                return Err(DenseError::DimensionMismatch {
                    position: row,
                    expected: dim,
                    found: entry.embedding.dim(),
                });
            }
            if (entry.embedding.norm() - 1.0).abs() > NORM_TOLERANCE {
                return Err(DenseError::UnnormalizedVector(row));
            }
            vectors.extend_from_slice(&entry.embedding.values);
            ids.push(entry.chunk_id);
            positions.push(entry.position);
        }
        let graph = match backend {
            DenseBackend::FlatExact => None,
            DenseBackend::Hnsw => Some(HnswGraph::build(&vectors, dim, params)),
        };
        Ok(Self {
            backend,
            dim,
            vectors,
            ids,
            positions,
            encoder: encoder.to_string(),
            corpus_fingerprint: corpus_fingerprint.to_string(),
            params,
            graph,
        })
    }

    /// Convenience builder for vectors whose row order is the corpus order.
    pub fn from_vectors(
        vectors: Vec<Embedding>,
        ids: Vec<String>,
        backend: DenseBackend,
        params: HnswParams,
    ) -> Result<Self, DenseError> {
        if vectors.len() != ids.len() {
            return Err(DenseError::IdCountMismatch {
                vectors: vectors.len(),
                ids: ids.len(),
            });
        }
        let entries = vectors
            .into_iter()
            .zip(ids)
            .enumerate()
            .map(|(position, (embedding, chunk_id))| IndexEntry {
                chunk_id,
                position,
                embedding,
            })
            .collect();
        Self::build(entries, backend, params, "", "")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backend(&self) -> DenseBackend {
        self.backend
    }

    pub fn encoder(&self) -> &str {
        &self.encoder
    }

    pub fn corpus_fingerprint(&self) -> &str {
        &self.corpus_fingerprint
    }

    pub fn hnsw_params(&self) -> HnswParams {
        self.params
    }

    pub fn graph(&self) -> Option<&HnswGraph> {
        self.graph.as_ref()
    }

    /// Stored vector for a row.
    pub fn row_vector(&self, row: usize) -> &[f32] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    /// Stored vector for a corpus position, if that chunk is indexed.
    pub fn reconstruct(&self, position: usize) -> Option<&[f32]> {
        self.positions
            .binary_search(&position)
            .ok()
            .map(|row| self.row_vector(row))
    }

    pub fn search(&self, query: &Embedding, k: usize) -> Result<Vec<DenseHit>, DenseError> {
        if self.is_empty() {
            return Err(DenseError::EmptyIndex);
        }
        if k == 0 {
            return Err(DenseError::ZeroK);
        }
        if query.dim() != self.dim {
            return Err(DenseError::DimensionMismatch {
                position: 0,
                expected: self.dim,
                found: query.dim(),
            });
        }
        if (query.norm() - 1.0).abs() > NORM_TOLERANCE {
            return Err(DenseError::UnnormalizedQuery);
        }
        let rows: Vec<(usize, f64)> = match &self.graph {
            None => self.flat_scan(&query.values, k),
            Some(graph) => {
                let mut hits = graph.search(&self.vectors, self.dim, &query.values, k);
                hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                hits
            }
        };
        Ok(rows
            .into_iter()
            .enumerate()
            .map(|(i, (row, score))| DenseHit {
                chunk_id: self.ids[row].clone(),
                position: self.positions[row],
                score: score as f32,
                rank: i + 1,
            })
            .collect())
    }

    fn flat_scan(&self, query: &[f32], k: usize) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .map(|row| (row, dot(query, self.row_vector(row))))
            .collect();
        // rows are in corpus order, so row order is the positional tie-break
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}
