//! Sentence-level support check, an automatic approximation of a manual
//! grounding judgment.
//!
//! A sentence is supported when it carries a `[n]` marker that resolves to an
//! included chunk and at least `threshold` of its content words occur in that
//! chunk. Sentences that state an evidence gap are never supported; they make
//! an otherwise supported answer incomplete.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{EvalError, Variant};
use crate::context::ContextBundle;
use crate::corpus::Corpus;
use crate::generation::extract_citations;
use crate::sparse::tokenize;

pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.5;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "being", "by", "can", "do", "does", "for", "from",
    "has", "have", "if", "in", "into", "is", "it", "its", "may", "must", "not", "of", "on", "or", "shall",
    "should", "such", "that", "the", "their", "them", "then", "there", "these", "this", "those", "to",
    "was", "were", "which", "while", "who", "will", "with", "within", "would",
];

const GAP_PHRASES: &[&str] = &[
    "not enough information",
    "insufficient information",
    "insufficient evidence",
    "information is missing",
    "is not specified in",
    "does not specify",
    "cannot be determined",
    "cannot provide an answer",
    "not available in the",
    "no information",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundingClass {
    Grounded,
    Unsupported,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceSupport {
    pub sentence: String,
    pub cited: Vec<usize>,
    /// Marker of the best-overlapping resolved chunk, if any.
    pub best_marker: Option<usize>,
    pub overlap: f64,
    pub gap_statement: bool,
    pub supported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingLabel {
    pub class: GroundingClass,
    pub chunk_used: bool,
    pub sentences: Vec<SentenceSupport>,
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[[^\]\s]*\]").expect("valid regex"))
}

/// Splits after `.`, `?` or `!` when followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, ch)) in chars.iter().enumerate() {
        if matches!(ch, '.' | '?' | '!') && chars.get(k + 1).is_some_and(|&(_, n)| n.is_whitespace()) {
            let end = i + ch.len_utf8();
            out.push(text[start..end].trim().to_string());
            start = end;
        }
    }
    out.push(text[start..].trim().to_string());
    out.retain(|s| !s.is_empty());
    out
}

/// Lowercased tokens minus stopwords, with citation markers removed first.
pub fn content_words(text: &str) -> BTreeSet<String> {
    let stripped = marker_regex().replace_all(text, " ");
    tokenize(&stripped)
        .into_iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

fn check_markers(answer: &str) -> Result<(), EvalError> {
    for m in marker_regex().find_iter(answer) {
        let inner = &m.as_str()[1..m.as_str().len() - 1];
        let starts_digit = inner.chars().next().is_some_and(|c| c.is_ascii_digit());
        if starts_digit && !inner.chars().all(|c| c.is_ascii_digit()) {
            return Err(EvalError::UnparsableCitation(m.as_str().to_string()));
        }
    }
    Ok(())
}

fn is_gap_statement(sentence: &str) -> bool {
    let lower = sentence.to_lowercase();
    GAP_PHRASES.iter().any(|p| lower.contains(p))
}

pub fn classify_grounding(
    answer: &str,
    bundle: &ContextBundle,
    corpus: &Corpus,
    truth_id: &str,
    threshold: f64,
) -> Result<GroundingLabel, EvalError> {
    check_markers(answer)?;
    let chunk_words = |marker: usize| -> Option<(String, BTreeSet<String>)> {
        let src = bundle.source_for_marker(marker)?;
        let chunk = corpus.get(&src.chunk_id)?;
        let words = content_words(&format!("{} {}", chunk.chunk_title, chunk.chunk_text));
        Some((chunk.chunk_id.clone(), words))
    };

    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut sentences = Vec::new();
    for sentence in split_sentences(answer) {
        let words = content_words(&sentence);
        if words.is_empty() {
            continue;
        }
        let cited = extract_citations(&sentence);
        let gap = is_gap_statement(&sentence);
        let mut best: Option<(usize, f64)> = None;
        for &m in &cited {
            let Some((id, cw)) = chunk_words(m) else {
                continue;
            };
            used.insert(id);
            let overlap = words.intersection(&cw).count() as f64 / words.len() as f64;
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((m, overlap));
            }
        }
        let overlap = best.map_or(0.0, |(_, o)| o);
        sentences.push(SentenceSupport {
            sentence,
            cited,
            best_marker: best.map(|(m, _)| m),
            overlap,
            gap_statement: gap,
            supported: !gap && best.is_some() && overlap >= threshold,
        });
    }

    let class = if sentences.is_empty() {
        GroundingClass::Incomplete
    } else if sentences.iter().any(|s| !s.supported && !s.gap_statement) {
        GroundingClass::Unsupported
    } else if sentences.iter().any(|s| s.gap_statement) {
        GroundingClass::Incomplete
    } else {
        GroundingClass::Grounded
    };
    Ok(GroundingLabel {
        class,
        chunk_used: used.contains(truth_id),
        sentences,
    })
}

/// Per-variant percentages of each class and of chunk use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSummary {
    pub variant: Variant,
    pub answers: usize,
    pub grounded: f64,
    pub unsupported: f64,
    pub incomplete: f64,
    pub chunk_used: f64,
}

impl GroundingSummary {
    pub fn by_variant(labels: &[(Variant, GroundingLabel)]) -> Vec<Self> {
        let mut groups: BTreeMap<Variant, Vec<&GroundingLabel>> = BTreeMap::new();
        for (v, l) in labels {
            groups.entry(*v).or_default().push(l);
        }
        groups
            .into_iter()
            .map(|(variant, ls)| {
                let n = ls.len() as f64;
                let pct = |f: &dyn Fn(&GroundingLabel) -> bool| 100.0 * ls.iter().filter(|l| f(l)).count() as f64 / n;
                Self {
                    variant,
                    answers: ls.len(),
                    grounded: pct(&|l| l.class == GroundingClass::Grounded),
                    unsupported: pct(&|l| l.class == GroundingClass::Unsupported),
                    incomplete: pct(&|l| l.class == GroundingClass::Incomplete),
                    chunk_used: pct(&|l| l.chunk_used),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentence_splitting() {
        assert_eq!(
            split_sentences("One. Two? Three!\nFour 2.5 kg"),
            vec!["One.", "Two?", "Three!", "Four 2.5 kg"]
        );
        assert!(split_sentences("  ").is_empty());
    }

    #[test]
    fn content_words_drop_markers_and_stopwords() {
        let w = content_words("The buffer [3] applies to the area.");
        assert_eq!(w, ["applies", "area", "buffer"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn marker_validation() {
        assert!(check_markers("ok [1] [12] [x] [NO CONTEXT]").is_ok());
        assert!(matches!(check_markers("bad [3a]"), Err(EvalError::UnparsableCitation(m)) if m == "[3a]"));
    }
}
