//! Bounded, citation-annotated context blocks.
//!
//! Each included chunk renders as
//! `[{index}] {chunk_title}, page {page} > {chunk_text}\n`, where `index` is the
//! chunk's corpus position. Chunks go in ranked order until the next rendering
//! would overflow the character budget; the evidence set is always a ranked
//! prefix.

pub mod audit;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Chunk, Corpus};
use crate::fusion::RetrievalRun;

pub const NO_CONTEXT: &str = "[NO CONTEXT]";
pub const DEFAULT_BUDGET: usize = 12_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub chunk_index: usize,
    pub chunk_id: String,
    pub source_file: String,
    pub section_title: String,
    pub page: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub context_text: String,
    pub included_ids: Vec<String>,
    pub sources: Vec<SourceRef>,
    pub truncated: bool,
    pub budget: usize,
}

impl ContextBundle {
    pub fn is_empty(&self) -> bool {
        self.included_ids.is_empty()
    }

    /// Hex SHA-256 of the context text.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.context_text.as_bytes()))
    }

    /// Source entry for an inline marker index, if that chunk was included.
    pub fn source_for_marker(&self, index: usize) -> Option<&SourceRef> {
        self.sources.iter().find(|s| s.chunk_index == index)
    }
}

pub fn render_chunk(index: usize, chunk: &Chunk) -> String {
    format!(
        "[{index}] {}, page {} > {}\n",
        chunk.chunk_title, chunk.page, chunk.chunk_text
    )
}

/// Builds the context block from `(corpus position, chunk)` pairs in rank
/// order. Budgets below the length of the empty-context marker are raised to it.
pub fn assemble_context(ranked: &[(usize, &Chunk)], budget: usize) -> ContextBundle {
    let budget = budget.max(NO_CONTEXT.len());
    let mut text = String::new();
    let mut used = 0usize;
    let mut included_ids = Vec::new();
    let mut sources = Vec::new();
    for &(index, chunk) in ranked {
        let rendered = render_chunk(index, chunk);
        let len = rendered.chars().count();
        if used + len > budget {
            break;
        }
        used += len;
        text.push_str(&rendered);
        included_ids.push(chunk.chunk_id.clone());
        sources.push(SourceRef {
            chunk_index: index,
            chunk_id: chunk.chunk_id.clone(),
            source_file: chunk.source_file.clone(),
            section_title: chunk.section_title.clone(),
            page: chunk.page,
        });
    }
    let truncated = included_ids.len() < ranked.len();
    if included_ids.is_empty() {
        text = NO_CONTEXT.to_string();
    }
    ContextBundle {
        context_text: text,
        included_ids,
        sources,
        truncated,
        budget,
    }
}

/// Context for the kept evidence of a retrieval run.
pub fn assemble_from_run(run: &RetrievalRun, corpus: &Corpus, budget: usize) -> ContextBundle {
    let ranked: Vec<(usize, &Chunk)> = run
        .evidence()
        .iter()
        .filter_map(|c| corpus.chunk(c.position).map(|ch| (c.position, ch)))
        .collect();
    assemble_context(&ranked, budget)
}
