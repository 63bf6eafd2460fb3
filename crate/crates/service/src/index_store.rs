//! On-disk index directory: the dense index, the BM25 index and a manifest
//! tying both to the corpus fingerprint and the build parameters.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use regrag_core::corpus::Corpus;
use regrag_core::dense::{DenseBackend, DenseIndex, HnswParams};
use regrag_core::embedding::Encoder;
use regrag_core::fusion::{build_dense_index, build_sparse_index, HybridRetriever, PipelineConfig, PipelineError};
use regrag_core::sparse::{Bm25Params, SparseIndex};

pub const DENSE_FILE: &str = "dense.idx";
pub const SPARSE_FILE: &str = "sparse.json";
pub const MANIFEST_FILE: &str = "manifest.json";

const REBUILD: &str = "run `regrag build-index` to rebuild it";

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("no index found in {dir}; {REBUILD}")]
    Missing { dir: PathBuf },
    #[error("index file {path} is corrupted ({reason}); {REBUILD}")]
    Corrupted { path: PathBuf, reason: String },
    #[error("index is stale: {reason}; {REBUILD}")]
    Stale { reason: String },
    #[error("cannot write index file {path}: {reason}")]
    WriteFailure { path: PathBuf, reason: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub corpus_fingerprint: String,
    pub chunk_count: usize,
    pub encoder: String,
    pub dimension: usize,
    pub dense_backend: DenseBackend,
    pub hnsw: HnswParams,
    /// Zero when every chunk embedded to the zero vector; no dense file then.
    pub dense_rows: usize,
    pub dense_sha256: Option<String>,
    pub sparse_sha256: String,
    pub bm25: Bm25Params,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IndexError> {
    let fail = |e: std::io::Error| IndexError::WriteFailure {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

fn read_file(path: &Path) -> Result<Vec<u8>, IndexError> {
    fs::read(path).map_err(|e| IndexError::Corrupted {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Builds both indexes and writes them. Deterministic: an unchanged corpus
/// and configuration rebuild to byte-identical files.
pub fn build_index(
    dir: &Path,
    corpus: &Corpus,
    encoder: &dyn Encoder,
    backend: DenseBackend,
    hnsw: HnswParams,
    config: &PipelineConfig,
) -> Result<IndexManifest, IndexError> {
    fs::create_dir_all(dir).map_err(|e| IndexError::WriteFailure {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let dense = build_dense_index(corpus, encoder, backend, hnsw)?;
    let sparse = build_sparse_index(corpus, config).map_err(PipelineError::from)?;

    let dense_path = dir.join(DENSE_FILE);
    let dense_sha256 = match &dense {
        Some(d) => {
            let bytes = d.to_bytes();
            write_atomic(&dense_path, &bytes)?;
            Some(sha256_hex(&bytes))
        }
        None => {
            let _ = fs::remove_file(&dense_path);
            None
        }
    };
    let sparse_bytes = serde_json::to_vec(&sparse).map_err(|e| IndexError::WriteFailure {
        path: dir.join(SPARSE_FILE),
        reason: e.to_string(),
    })?;
    write_atomic(&dir.join(SPARSE_FILE), &sparse_bytes)?;

    let spec = encoder.spec();
    let manifest = IndexManifest {
        corpus_fingerprint: corpus.fingerprint().to_string(),
        chunk_count: corpus.len(),
        encoder: spec.name.clone(),
        dimension: spec.dimension,
        dense_backend: backend,
        hnsw,
        dense_rows: dense.as_ref().map_or(0, DenseIndex::len),
        dense_sha256,
        sparse_sha256: sha256_hex(&sparse_bytes),
        bm25: config.bm25,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<IndexManifest, IndexError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(IndexError::Missing { dir: dir.to_path_buf() });
    }
    let bytes = read_file(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| IndexError::Corrupted {
        path,
        reason: e.to_string(),
    })
}

/// Loads the persisted indexes and checks them against the corpus, encoder
/// and configuration in force.
pub fn load_index(
    dir: &Path,
    corpus: Arc<Corpus>,
    encoder: Arc<dyn Encoder>,
    backend: DenseBackend,
    config: PipelineConfig,
) -> Result<HybridRetriever, IndexError> {
    let manifest = read_manifest(dir)?;
    if manifest.corpus_fingerprint != corpus.fingerprint() {
        return Err(IndexError::Stale {
            reason: format!(
                "index fingerprint {} does not match corpus fingerprint {}",
                manifest.corpus_fingerprint,
                corpus.fingerprint()
            ),
        });
    }
    let spec = encoder.spec();
    if manifest.encoder != spec.name || manifest.dimension != spec.dimension {
        return Err(IndexError::Stale {
            reason: format!(
                "index built with encoder {} (d={}), configured encoder is {} (d={})",
                manifest.encoder, manifest.dimension, spec.name, spec.dimension
            ),
        });
    }
    if manifest.dense_backend != backend {
        return Err(IndexError::Stale {
            reason: format!(
                "index built for dense backend {:?}, configured backend is {:?}",
                manifest.dense_backend, backend
            ),
        });
    }
    if manifest.bm25 != config.bm25 {
        return Err(IndexError::Stale {
            reason: "BM25 parameters differ from the configuration".into(),
        });
    }

    let dense = match &manifest.dense_sha256 {
        Some(expected) => {
            let path = dir.join(DENSE_FILE);
            let bytes = read_file(&path)?;
            if sha256_hex(&bytes) != *expected {
                return Err(IndexError::Corrupted {
                    path,
                    reason: "checksum does not match manifest".into(),
                });
            }
            let idx = DenseIndex::from_bytes(&bytes).map_err(|e| IndexError::Corrupted {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            if idx.len() != manifest.dense_rows {
                return Err(IndexError::Corrupted {
                    path,
                    reason: format!("{} rows, manifest says {}", idx.len(), manifest.dense_rows),
                });
            }
            Some(idx)
        }
        None => None,
    };

    let sparse_path = dir.join(SPARSE_FILE);
    let sparse_bytes = read_file(&sparse_path)?;
    if sha256_hex(&sparse_bytes) != manifest.sparse_sha256 {
        return Err(IndexError::Corrupted {
            path: sparse_path,
            reason: "checksum does not match manifest".into(),
        });
    }
    let sparse: SparseIndex = serde_json::from_slice(&sparse_bytes).map_err(|e| IndexError::Corrupted {
        path: sparse_path,
        reason: e.to_string(),
    })?;

    HybridRetriever::from_parts(corpus, encoder, dense, sparse, config).map_err(|e| match e {
        PipelineError::StaleIndex(reason) => IndexError::Stale { reason },
        other => IndexError::Pipeline(other),
    })
}
