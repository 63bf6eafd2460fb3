//! Chunked regulatory corpus: loading, validation and the indexed retrieval string.
//!
//! A corpus file is a single JSON array of chunk objects. Every object must carry
//! exactly the [`Chunk`] fields; unknown fields are rejected so the evidence store
//! stays inspectable. Chunks keep their file order, which is also their positional
//! index everywhere downstream (dense ids, BM25 postings, citation markers).

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Field names accepted in a chunk object, in canonical order.
pub const CHUNK_FIELDS: [&str; 9] = [
    "chunk_id",
    "chunk_title",
    "chunk_text",
    "chunk_summary",
    "chunk_keywords",
    "source_file",
    "section_title",
    "page",
    "kind",
];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    MissingFile(PathBuf),
    #[error("failed to read corpus file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus JSON at line {line}, column {column}: {message}")]
    MalformedJson {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate chunk id {0:?}")]
    DuplicateChunkId(String),
    #[error("schema violation in field {field:?} of chunk {chunk_id:?}: {reason}")]
    SchemaViolation {
        field: String,
        chunk_id: String,
        reason: String,
    },
}

/// Editorial class of a chunk. Reported only; never used for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkKind {
    Article,
    Amc,
    Gm,
    Table,
}

impl ChunkKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "article" => Some(Self::Article),
            "amc" => Some(Self::Amc),
            "gm" => Some(Self::Gm),
            "table" => Some(Self::Table),
            _ => None,
        }
    }
}

impl fmt::Display for ChunkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Article => "article",
            Self::Amc => "amc",
            Self::Gm => "gm",
            Self::Table => "table",
        };
        f.write_str(s)
    }
}

/// The atomic evidence unit: text plus the metadata needed to cite it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chunk {
    pub chunk_id: String,
    pub chunk_title: String,
    pub chunk_text: String,
    pub chunk_summary: String,
    pub chunk_keywords: Vec<String>,
    pub source_file: String,
    pub section_title: String,
    pub page: u32,
    pub kind: ChunkKind,
}

impl Chunk {
    /// Checks the per-chunk invariants.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let violation = |field: &str, reason: &str| CorpusError::SchemaViolation {
            field: field.to_string(),
            chunk_id: self.chunk_id.clone(),
            reason: reason.to_string(),
        };
        if self.chunk_id.trim().is_empty() {
            return Err(violation("chunk_id", "must be non-empty"));
        }
        if self.chunk_title.trim().is_empty() {
            return Err(violation("chunk_title", "must be non-empty"));
        }
        if self.chunk_text.trim().is_empty() {
            return Err(violation("chunk_text", "must be non-empty"));
        }
        for kw in &self.chunk_keywords {
            if kw.is_empty() {
                return Err(violation("chunk_keywords", "empty keyword"));
            }
            if kw.to_lowercase() != *kw {
                return Err(violation("chunk_keywords", "keywords must be lowercase"));
            }
        }
        if self.page < 1 {
            return Err(violation("page", "page must be >= 1"));
        }
        Ok(())
    }
}

/// Title-weighted indexing representation: the title twice, then the body,
/// newline separated.
pub fn build_retrieval_string(chunk: &Chunk) -> String {
    let title = &chunk.chunk_title;
    let mut out = String::with_capacity(title.len() * 2 + chunk.chunk_text.len() + 2);
    out.push_str(title);
    out.push('\n');
    out.push_str(title);
    out.push('\n');
    out.push_str(&chunk.chunk_text);
    out
}

/// Immutable, validated corpus with stable positional indices.
#[derive(Debug, Clone)]
pub struct Corpus {
    chunks: Vec<Chunk>,
    retrieval_strings: Vec<String>,
    by_id: HashMap<String, usize>,
    fingerprint: String,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.chunks == other.chunks && self.fingerprint == other.fingerprint
    }
}

impl Corpus {
    pub fn from_chunks(chunks: Vec<Chunk>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(chunks.len());
        for (pos, chunk) in chunks.iter().enumerate() {
            chunk.validate()?;
            if by_id.insert(chunk.chunk_id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateChunkId(chunk.chunk_id.clone()));
            }
        }
        let retrieval_strings = chunks.iter().map(build_retrieval_string).collect();
        let fingerprint = fingerprint_chunks(&chunks);
        Ok(Self {
            chunks,
            retrieval_strings,
            by_id,
            fingerprint,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self, CorpusError> {
        let value: Value = serde_json::from_str(json).map_err(|e| CorpusError::MalformedJson {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let Value::Array(items) = value else {
            return Err(CorpusError::MalformedJson {
                line: 1,
                column: 1,
                message: "top-level value must be an array of chunk objects".into(),
            });
        };
        let chunks = items
            .iter()
            .enumerate()
            .map(|(i, item)| chunk_from_value(i, item))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_chunks(chunks)
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, position: usize) -> Option<&Chunk> {
        self.chunks.get(position)
    }

    pub fn get(&self, chunk_id: &str) -> Option<&Chunk> {
        self.position(chunk_id).map(|p| &self.chunks[p])
    }

    pub fn position(&self, chunk_id: &str) -> Option<usize> {
        self.by_id.get(chunk_id).copied()
    }

    /// The stored retrieval string for the chunk at `position`.
    pub fn retrieval_string(&self, position: usize) -> Option<&str> {
        self.retrieval_strings.get(position).map(String::as_str)
    }

    pub fn retrieval_strings(&self) -> &[String] {
        &self.retrieval_strings
    }

    /// SHA-256 over the canonical serialization of every chunk, hex encoded.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Corpus::from_json_str(&text)
}

fn fingerprint_chunks(chunks: &[Chunk]) -> String {
    let mut hasher = Sha256::new();
    for chunk in chunks {
        // struct field order is fixed, so this serialization is canonical
        let bytes = serde_json::to_vec(chunk).expect("chunk serialization is infallible");
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    hex::encode(hasher.finalize())
}

fn chunk_from_value(index: usize, value: &Value) -> Result<Chunk, CorpusError> {
    let Value::Object(obj) = value else {
        return Err(CorpusError::SchemaViolation {
            field: "<chunk>".into(),
            chunk_id: format!("#{index}"),
            reason: "chunk entry must be a JSON object".into(),
        });
    };
    let chunk_id = match obj.get("chunk_id") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(CorpusError::SchemaViolation {
                field: "chunk_id".into(),
                chunk_id: format!("#{index}"),
                reason: "expected a string".into(),
            })
        }
        None => {
            return Err(CorpusError::SchemaViolation {
                field: "chunk_id".into(),
                chunk_id: format!("#{index}"),
                reason: "missing field".into(),
            })
        }
    };
    let reader = FieldReader { obj, chunk_id: &chunk_id };
    if let Some(unknown) = obj.keys().find(|k| !CHUNK_FIELDS.contains(&k.as_str())) {
        return Err(reader.violation(unknown, "unknown field"));
    }

    let keywords = match reader.require("chunk_keywords")? {
        Value::Array(items) => items
            .iter()
            .map(|kw| match kw {
                Value::String(s) => Ok(s.clone()),
                _ => Err(reader.violation("chunk_keywords", "keywords must be strings")),
            })
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err(reader.violation("chunk_keywords", "expected an array of strings")),
    };
    let page = match reader.require("page")? {
        Value::Number(n) => n
            .as_u64()
            .filter(|p| *p >= 1 && *p <= u64::from(u32::MAX))
            .ok_or_else(|| reader.violation("page", "page must be a positive integer"))?
            as u32,
        _ => return Err(reader.violation("page", "expected a positive integer")),
    };
    let kind_str = reader.string("kind")?;
    let kind = ChunkKind::parse(&kind_str)
        .ok_or_else(|| reader.violation("kind", "expected one of article, amc, gm, table"))?;

    Ok(Chunk {
        chunk_title: reader.string("chunk_title")?,
        chunk_text: reader.string("chunk_text")?,
        chunk_summary: reader.string("chunk_summary")?,
        chunk_keywords: keywords,
        source_file: reader.string("source_file")?,
        section_title: reader.string("section_title")?,
        page,
        kind,
        chunk_id,
    })
}

struct FieldReader<'a> {
    obj: &'a Map<String, Value>,
    chunk_id: &'a str,
}

impl FieldReader<'_> {
    fn violation(&self, field: &str, reason: &str) -> CorpusError {
        CorpusError::SchemaViolation {
            field: field.to_string(),
            chunk_id: self.chunk_id.to_string(),
            reason: reason.to_string(),
        }
    }

    fn require(&self, field: &str) -> Result<&Value, CorpusError> {
        self.obj
            .get(field)
            .ok_or_else(|| self.violation(field, "missing field"))
    }

    fn string(&self, field: &str) -> Result<String, CorpusError> {
        match self.require(field)? {
            Value::String(s) => Ok(s.clone()),
            _ => Err(self.violation(field, "expected a string")),
        }
    }
}
