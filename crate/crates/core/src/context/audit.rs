//! Append-only JSON-lines audit trail.
//!
//! One record per answered query, sub-query, indicator request or
//! retrieval-only run. Record ids are `{sequence:06}-{digest}` where the
//! digest covers the record content minus id and timestamps, so identical runs
//! against a fresh store get identical ids.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{assemble_from_run, ContextBundle, SourceRef};
use crate::dense::{DenseBackend, HnswParams};
use crate::fusion::{HybridRetriever, PipelineConfig, PipelineError, RetrievalRun};
use crate::generation::{GenerationParams, SubQuery};

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("audit store {}: {reason}", path.display())]
    StorageFailure { path: PathBuf, reason: String },
    #[error("record was produced over corpus {recorded}, current corpus is {current}")]
    FingerprintMismatch { recorded: String, current: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Chat,
    SubQuery,
    Indicator,
    Retrieval,
}

/// Configuration needed to replay a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub pipeline: PipelineConfig,
    pub encoder: String,
    pub dense_backend: DenseBackend,
    pub hnsw: HnswParams,
    pub context_budget: usize,
    pub generation: Option<GenerationParams>,
    pub backend: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: String,
    pub parent_id: Option<String>,
    pub kind: RecordKind,
    pub query: String,
    pub sub_queries: Vec<SubQuery>,
    pub config: RunSnapshot,
    pub corpus_fingerprint: String,
    pub retrieval: Option<RetrievalRun>,
    pub included_ids: Vec<String>,
    pub context_text: String,
    pub sources: Vec<SourceRef>,
    pub truncated: bool,
    pub answer: Option<String>,
    pub citations: Vec<usize>,
    pub reasoning_trace: Option<String>,
    /// Indicator result payload for indicator records.
    pub indicator: Option<serde_json::Value>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl AuditRecord {
    pub fn new(kind: RecordKind, query: &str, config: RunSnapshot, corpus_fingerprint: &str) -> Self {
        let now = Utc::now();
        Self {
            id: String::new(),
            parent_id: None,
            kind,
            query: query.to_string(),
            sub_queries: Vec::new(),
            config,
            corpus_fingerprint: corpus_fingerprint.to_string(),
            retrieval: None,
            included_ids: Vec::new(),
            context_text: String::new(),
            sources: Vec::new(),
            truncated: false,
            answer: None,
            citations: Vec::new(),
            reasoning_trace: None,
            indicator: None,
            started_at: now,
            finished_at: now,
        }
    }

    pub fn with_evidence(mut self, run: RetrievalRun, bundle: &ContextBundle) -> Self {
        self.retrieval = Some(run);
        self.included_ids = bundle.included_ids.clone();
        self.context_text = bundle.context_text.clone();
        self.sources = bundle.sources.clone();
        self.truncated = bundle.truncated;
        self
    }

    /// Serialized record with id and timestamps blanked.
    pub fn content_json(&self) -> String {
        let mut r = self.clone();
        r.id.clear();
        r.started_at = DateTime::<Utc>::UNIX_EPOCH;
        r.finished_at = DateTime::<Utc>::UNIX_EPOCH;
        serde_json::to_string(&r).expect("audit record serializes")
    }

    pub fn content_digest(&self) -> String {
        hex::encode(Sha256::digest(self.content_json().as_bytes()))
    }
}

#[derive(Debug)]
pub struct AuditStore {
    path: PathBuf,
    next_seq: Mutex<u64>,
}

impl AuditStore {
    /// Opens or creates the store at `path`, creating parent directories.
    pub fn open(path: &Path) -> Result<Self, AuditError> {
        let fail = |e: std::io::Error| AuditError::StorageFailure {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(fail)?;
        }
        OpenOptions::new().create(true).append(true).open(path).map_err(fail)?;
        let lines = BufReader::new(File::open(path).map_err(fail)?)
            .lines()
            .map_while(Result::ok)
            .filter(|l| !l.trim().is_empty())
            .count();
        Ok(Self {
            path: path.to_path_buf(),
            next_seq: Mutex::new(lines as u64 + 1),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn fail(&self, e: impl ToString) -> AuditError {
        AuditError::StorageFailure {
            path: self.path.clone(),
            reason: e.to_string(),
        }
    }

    /// Assigns an id, stamps `finished_at` and appends the record.
    pub fn append(&self, mut record: AuditRecord) -> Result<String, AuditError> {
        let mut seq = self.next_seq.lock().map_err(|e| self.fail(e))?;
        record.id = format!("{:06}-{}", *seq, &record.content_digest()[..12]);
        record.finished_at = Utc::now();
        let mut line = serde_json::to_string(&record).map_err(|e| self.fail(e))?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| self.fail(e))?;
        f.write_all(line.as_bytes()).map_err(|e| self.fail(e))?;
        f.flush().map_err(|e| self.fail(e))?;
        *seq += 1;
        Ok(record.id)
    }

    /// All complete records in append order.
    pub fn list(&self) -> Result<Vec<AuditRecord>, AuditError> {
        let f = File::open(&self.path).map_err(|e| self.fail(e))?;
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| self.fail(e))?;
            if line.trim().is_empty() {
                continue;
            }
            // A torn trailing line from a concurrent append is skipped.
            if let Ok(rec) = serde_json::from_str(&line) {
                out.push(rec);
            }
        }
        Ok(out)
    }

    pub fn get(&self, id: &str) -> Result<Option<AuditRecord>, AuditError> {
        Ok(self.list()?.into_iter().find(|r| r.id == id))
    }

    pub fn children(&self, parent_id: &str) -> Result<Vec<AuditRecord>, AuditError> {
        Ok(self
            .list()?
            .into_iter()
            .filter(|r| r.parent_id.as_deref() == Some(parent_id))
            .collect())
    }
}

/// Re-runs retrieval and context assembly from a record's snapshot and
/// returns the included ids. Records without retrieval replay to nothing.
pub fn replay(record: &AuditRecord, retriever: &HybridRetriever) -> Result<Vec<String>, AuditError> {
    let current = retriever.corpus().fingerprint();
    if record.corpus_fingerprint != current {
        return Err(AuditError::FingerprintMismatch {
            recorded: record.corpus_fingerprint.clone(),
            current: current.to_string(),
        });
    }
    let Some(original) = &record.retrieval else {
        return Ok(Vec::new());
    };
    let run = retriever.retrieve_with(&original.query, &record.config.pipeline)?;
    let bundle = assemble_from_run(&run, retriever.corpus(), record.config.context_budget);
    Ok(bundle.included_ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snapshot() -> RunSnapshot {
        RunSnapshot {
            pipeline: PipelineConfig::default(),
            encoder: "hashing-bow".into(),
            dense_backend: DenseBackend::FlatExact,
            hnsw: HnswParams::default(),
            context_budget: 12_000,
            generation: None,
            backend: None,
        }
    }

    #[test]
    fn append_get_and_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/audit.jsonl");
        let store = AuditStore::open(&path).unwrap();
        let rec = AuditRecord::new(RecordKind::Retrieval, "q", snapshot(), "fp");
        let id1 = store.append(rec.clone()).unwrap();
        let id2 = store.append(rec.clone()).unwrap();
        assert!(id1.starts_with("000001-"));
        assert!(id2.starts_with("000002-"));
        assert_eq!(id1[7..], id2[7..]);
        let got = store.get(&id1).unwrap().unwrap();
        assert_eq!(got.query, "q");
        assert!(got.answer.is_none());
        assert!(store.get("missing").unwrap().is_none());

        let reopened = AuditStore::open(&path).unwrap();
        assert!(reopened.append(rec).unwrap().starts_with("000003-"));
        assert_eq!(reopened.list().unwrap().len(), 3);
    }

    #[test]
    fn parent_links() {
        let dir = tempfile::tempdir().unwrap();
        let store = AuditStore::open(&dir.path().join("a.jsonl")).unwrap();
        let parent = store
            .append(AuditRecord::new(RecordKind::Chat, "q", snapshot(), "fp"))
            .unwrap();
        for sub in ["a", "b"] {
            let mut r = AuditRecord::new(RecordKind::SubQuery, sub, snapshot(), "fp");
            r.parent_id = Some(parent.clone());
            store.append(r).unwrap();
        }
        assert_eq!(store.children(&parent).unwrap().len(), 2);
    }

    #[test]
    fn content_json_ignores_timestamps() {
        let a = AuditRecord::new(RecordKind::Chat, "q", snapshot(), "fp");
        let mut b = a.clone();
        b.started_at = Utc::now() + chrono::Duration::seconds(5);
        b.id = "x".into();
        assert_eq!(a.content_json(), b.content_json());
    }

    #[test]
    fn unwritable_path_is_storage_failure() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        assert!(matches!(
            AuditStore::open(&blocker.join("audit.jsonl")),
            Err(AuditError::StorageFailure { .. })
        ));
    }
}
