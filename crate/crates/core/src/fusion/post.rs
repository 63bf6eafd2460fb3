use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embedding::{dot, l2_normalize, Encoder, EmbeddingError};

use super::RankedCandidate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostWeights {
    pub w_fused: f64,
    pub w_summary: f64,
    pub w_keyword: f64,
}

impl Default for PostWeights {
    fn default() -> Self {
        Self {
            w_fused: 0.5,
            w_summary: 0.4,
            w_keyword: 0.1,
        }
    }
}

/// Number of `keywords` occurring as substrings of the lowercased query.
/// Each keyword counts at most once.
pub fn keyword_boost(query: &str, keywords: &[String]) -> usize {
    let q = query.to_lowercase();
    keywords
        .iter()
        .filter(|kw| !kw.is_empty() && q.contains(kw.as_str()))
        .count()
}

/// Min-max scaling to `[0, 1]`; a constant list maps to all ones.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        return Vec::new();
    }
    if hi - lo <= 0.0 {
        return vec![1.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Unit summary embedding per corpus position; `None` where the summary
/// embeds to zero.
#[derive(Debug, Clone, Default)]
pub struct SummaryVectors(Vec<Option<Vec<f32>>>);

impl SummaryVectors {
    pub fn build(corpus: &Corpus, encoder: &dyn Encoder) -> Result<Self, EmbeddingError> {
        corpus
            .chunks()
            .iter()
            .map(|c| {
                let raw = encoder.encode(&c.chunk_summary)?;
                Ok(match l2_normalize(&raw) {
                    Ok(v) => Some(v.values),
                    Err(EmbeddingError::ZeroVector) => None,
                    Err(e) => return Err(e),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }

    pub fn get(&self, position: usize) -> Option<&[f32]> {
        self.0.get(position).and_then(|v| v.as_deref())
    }
}

/// Blends normalized RRF score, summary cosine and keyword count, then re-sorts
/// (score descending, corpus position ascending).
pub fn post_score(
    mut candidates: Vec<RankedCandidate>,
    query: &str,
    query_vec: Option<&[f32]>,
    corpus: &Corpus,
    summaries: &SummaryVectors,
    weights: PostWeights,
) -> Vec<RankedCandidate> {
    let fused = min_max(&candidates.iter().map(|c| c.rrf_score).collect::<Vec<_>>());
    for (c, fused_norm) in candidates.iter_mut().zip(fused) {
        let summary_sim = match (query_vec, summaries.get(c.position)) {
            (Some(q), Some(s)) => dot(q, s),
            _ => 0.0,
        };
        let boost = corpus
            .chunk(c.position)
            .map_or(0, |ch| keyword_boost(query, &ch.chunk_keywords));
        c.summary_score = summary_sim;
        c.keyword_boost = boost;
        c.post_score = weights.w_fused * fused_norm
            + weights.w_summary * summary_sim
            + weights.w_keyword * boost as f64;
    }
    candidates.sort_by(|a, b| {
        b.post_score
            .total_cmp(&a.post_score)
            .then(a.position.cmp(&b.position))
    });
    candidates
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kws(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn keyword_boost_examples() {
        assert_eq!(keyword_boost("ground risk buffer", &kws(&["ground risk", "buffer"])), 2);
        assert_eq!(keyword_boost("air traffic", &kws(&["ground risk"])), 0);
        assert_eq!(keyword_boost("Ground RISKS here", &kws(&["risk"])), 1);
        assert_eq!(keyword_boost("risk risk", &kws(&["risk"])), 1);
    }

    #[test]
    fn min_max_examples() {
        assert_eq!(min_max(&[2.0, 1.0, 0.0]), vec![1.0, 0.5, 0.0]);
        assert_eq!(min_max(&[3.0, 3.0]), vec![1.0, 1.0]);
        assert_eq!(min_max(&[7.0]), vec![1.0]);
    }
}
