//! BM25 lexical retrieval over the chunk retrieval strings.
//!
//! ```text
//! BM25(Q, D) = Σ_{t ∈ Q} IDF(t) · f(t,D)·(k1 + 1) / (f(t,D) + k1·(1 − b + b·|D|/avgdl))
//! IDF(t)     = ln((N − n_t + 0.5) / (n_t + 0.5) + 1)
//! ```
//!
//! `Q` is treated as a set: a query term repeated in the query contributes once.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SparseError {
    #[error("sparse index is empty")]
    EmptyIndex,
    #[error("document count mismatch: {ids} ids for {texts} texts")]
    LengthMismatch { ids: usize, texts: usize },
}

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+").expect("static regex"))
}

/// Lowercases and extracts maximal runs of word characters (letters, digits,
/// underscore). No stemming, no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    word_regex()
        .find_iter(&lowered)
        .map(|m| m.as_str().to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub position: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseHit {
    pub chunk_id: String,
    pub position: usize,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_len: f64,
    ids: Vec<String>,
    params: Bm25Params,
}

impl SparseIndex {
    /// Builds the index from `(chunk_id, retrieval string)` pairs in corpus order.
    pub fn build<I, S>(ids: Vec<String>, texts: I, params: Bm25Params) -> Result<Self, SparseError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(ids.len());
        for (pos, text) in texts.into_iter().enumerate() {
            let tokens = tokenize(text.as_ref());
            doc_lengths.push(tokens.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for tok in tokens {
                *tf.entry(tok).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    position: pos as u32,
                    tf: count,
                });
            }
        }
        if doc_lengths.len() != ids.len() {
            return Err(SparseError::LengthMismatch {
                ids: ids.len(),
                texts: doc_lengths.len(),
            });
        }
        for list in postings.values_mut() {
            list.sort_by_key(|p| p.position);
        }
        let avg_len = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64
        };
        Ok(Self {
            postings,
            doc_lengths,
            avg_len,
            ids,
            params,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_freq(&self, term: &str, position: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|list| {
                list.binary_search_by_key(&(position as u32), |p| p.position)
                    .ok()
                    .map(|i| list[i].tf)
            })
            .unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let nt = self.doc_freq(term) as f64;
        ((n - nt + 0.5) / (nt + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, position: usize) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        let Bm25Params { k1, b } = self.params;
        let f = f64::from(tf);
        let len_ratio = if self.avg_len > 0.0 {
            f64::from(self.doc_lengths[position]) / self.avg_len
        } else {
            0.0
        };
        idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len_ratio))
    }

    /// Score of one document for a tokenized query.
    pub fn bm25_score(&self, query_tokens: &[String], position: usize) -> f64 {
        if position >= self.n_docs() {
            return 0.0;
        }
        let terms: BTreeSet<&str> = query_tokens.iter().map(String::as_str).collect();
        terms
            .into_iter()
            .map(|t| self.term_weight(self.idf(t), self.term_freq(t, position), position))
            .sum()
    }

    /// Documents with a positive score, best first, ties by corpus position.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<SparseHit>, SparseError> {
        if self.n_docs() == 0 {
            return Err(SparseError::EmptyIndex);
        }
        let tokens: Vec<String> = tokenize(query);
        let candidates: BTreeSet<usize> = tokens
            .iter()
            .filter_map(|t| self.postings.get(t))
            .flatten()
            .map(|p| p.position as usize)
            .collect();
        let mut hits: Vec<(usize, f64)> = candidates
            .into_iter()
            .map(|pos| (pos, self.bm25_score(&tokens, pos)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        Ok(hits
            .into_iter()
            .enumerate()
            .map(|(i, (pos, score))| SparseHit {
                chunk_id: self.ids[pos].clone(),
                position: pos,
                score,
                rank: i + 1,
            })
            .collect())
    }
}
