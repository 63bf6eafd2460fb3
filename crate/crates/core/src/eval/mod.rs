//! Retrieval metrics, grounding classification and indicator statistics.

mod grounding;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::fusion::{HybridRetriever, PipelineError};
use crate::sparse::tokenize;

pub use grounding::{
    classify_grounding, content_words, split_sentences, GroundingClass, GroundingLabel, GroundingSummary,
    SentenceSupport, DEFAULT_OVERLAP_THRESHOLD,
};

pub const CUTOFFS: [usize; 4] = [1, 3, 5, 10];
pub const SIMILARITY_MEASURE: &str = "token-set jaccard";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("metric over an empty set")]
    EmptySet,
    #[error("similarity needs at least two texts")]
    FewerThanTwo,
    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("unparsable citation marker {0:?}")]
    UnparsableCitation(String),
    #[error("ground truth chunk {0:?} is not in the corpus")]
    UnknownGroundTruth(String),
    #[error("eval fixture {path}: {reason}")]
    Fixture { path: String, reason: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Direct,
    Synonym,
    Reworked,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Self::Direct, Self::Synonym, Self::Reworked];

    pub fn label(self) -> &'static str {
        match self {
            Self::Direct => "Direct match",
            Self::Synonym => "Synonym paraphrase",
            Self::Reworked => "Reworked question",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalQuery {
    pub query: String,
    pub variant: Variant,
    pub ground_truth_chunk_id: String,
}

pub fn load_eval_queries(path: &Path) -> Result<Vec<EvalQuery>, EvalError> {
    let fail = |reason: String| EvalError::Fixture {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| fail(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub query: String,
    pub variant: Variant,
    pub ranked_ids: Vec<String>,
    /// 1-based rank of the ground truth, if retrieved.
    pub rank_of_truth: Option<usize>,
}

impl RetrievalOutcome {
    pub fn from_ranking(query: &str, variant: Variant, ranked_ids: Vec<String>, truth: &str) -> Self {
        let rank_of_truth = ranked_ids.iter().position(|id| id == truth).map(|i| i + 1);
        Self {
            query: query.to_string(),
            variant,
            ranked_ids,
            rank_of_truth,
        }
    }

    /// Outcome with only a rank, for fixtures that have no ranking.
    pub fn with_rank(variant: Variant, rank: Option<usize>) -> Self {
        Self {
            query: String::new(),
            variant,
            ranked_ids: Vec::new(),
            rank_of_truth: rank,
        }
    }
}

/// Runs every query through the retriever and records where the ground truth
/// lands in the final ranking.
pub fn evaluate_retrieval(queries: &[EvalQuery], retriever: &HybridRetriever) -> Result<Vec<RetrievalOutcome>, EvalError> {
    let corpus: &Corpus = retriever.corpus();
    queries
        .iter()
        .map(|q| {
            if corpus.get(&q.ground_truth_chunk_id).is_none() {
                return Err(EvalError::UnknownGroundTruth(q.ground_truth_chunk_id.clone()));
            }
            let run = retriever.retrieve(&q.query)?;
            let ranked = run.candidates.iter().map(|c| c.chunk_id.clone()).collect();
            Ok(RetrievalOutcome::from_ranking(&q.query, q.variant, ranked, &q.ground_truth_chunk_id))
        })
        .collect()
}

pub fn hit_at_m(outcomes: &[RetrievalOutcome], m: usize) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let hits = outcomes
        .iter()
        .filter(|o| o.rank_of_truth.is_some_and(|r| r <= m))
        .count();
    Ok(100.0 * hits as f64 / outcomes.len() as f64)
}

pub fn mrr(outcomes: &[RetrievalOutcome]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let sum: f64 = outcomes
        .iter()
        .map(|o| o.rank_of_truth.map_or(0.0, |r| 1.0 / r as f64))
        .sum();
    Ok(sum / outcomes.len() as f64)
}

/// Percentage of outcomes where the truth was retrieved at any rank.
pub fn found_rate(outcomes: &[RetrievalOutcome]) -> Result<f64, EvalError> {
    hit_at_m(outcomes, usize::MAX)
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    pub queries: usize,
    /// `(m, Hit@m %)` for each cutoff.
    pub hits: Vec<(usize, f64)>,
    pub mrr: f64,
}

impl MetricRow {
    pub fn compute(label: &str, outcomes: &[RetrievalOutcome]) -> Result<Self, EvalError> {
        Ok(Self {
            label: label.to_string(),
            queries: outcomes.len(),
            hits: CUTOFFS
                .iter()
                .map(|&m| hit_at_m(outcomes, m).map(|h| (m, h)))
                .collect::<Result<_, _>>()?,
            mrr: mrr(outcomes)?,
        })
    }

    pub fn hit(&self, m: usize) -> Option<f64> {
        self.hits.iter().find(|(k, _)| *k == m).map(|(_, h)| *h)
    }
}

/// Per-variant rows (variants without queries are skipped) and an overall row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub rows: Vec<MetricRow>,
    pub overall: MetricRow,
}

impl RetrievalReport {
    pub fn from_outcomes(outcomes: &[RetrievalOutcome]) -> Result<Self, EvalError> {
        let mut rows = Vec::new();
        for v in Variant::ALL {
            let subset: Vec<RetrievalOutcome> = outcomes.iter().filter(|o| o.variant == v).cloned().collect();
            if !subset.is_empty() {
                rows.push(MetricRow::compute(v.label(), &subset)?);
            }
        }
        Ok(Self {
            rows,
            overall: MetricRow::compute("Overall", outcomes)?,
        })
    }

    pub fn row(&self, variant: Variant) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.label == variant.label())
    }

    /// Plain-text table, percentages to one decimal and MRR to three.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<20}", "Variant");
        for m in CUTOFFS {
            let _ = write!(out, " {:>8}", format!("Hit@{m}"));
        }
        let _ = writeln!(out, " {:>7}", "MRR");
        for row in self.rows.iter().chain(std::iter::once(&self.overall)) {
            let _ = write!(out, "{:<20}", row.label);
            for (_, h) in &row.hits {
                let _ = write!(out, " {:>7.1}%", h);
            }
            let _ = writeln!(out, " {:>7.3}", row.mrr);
        }
        out
    }

    /// Machine-readable mirror of the table with rounded figures.
    pub fn to_json(&self) -> serde_json::Value {
        let row_json = |r: &MetricRow| {
            let mut obj = serde_json::Map::new();
            obj.insert("variant".into(), r.label.clone().into());
            obj.insert("queries".into(), r.queries.into());
            for (m, h) in &r.hits {
                obj.insert(format!("hit@{m}"), round1(*h).into());
            }
            obj.insert("mrr".into(), round3(r.mrr).into());
            serde_json::Value::Object(obj)
        };
        serde_json::json!({
            "rows": self.rows.iter().map(row_json).collect::<Vec<_>>(),
            "overall": row_json(&self.overall),
        })
    }
}

/// Mean pairwise token-set Jaccard over all unordered pairs, as a percentage.
/// Two empty token sets count as identical.
pub fn explanation_similarity(texts: &[String]) -> Result<f64, EvalError> {
    if texts.len() < 2 {
        return Err(EvalError::FewerThanTwo);
    }
    let sets: Vec<BTreeSet<String>> = texts.iter().map(|t| tokenize(t).into_iter().collect()).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let union = sets[i].union(&sets[j]).count();
            let inter = sets[i].intersection(&sets[j]).count();
            total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
            pairs += 1;
        }
    }
    Ok(100.0 * total / pairs as f64)
}

/// Exact-match percentage; an absent prediction (inconclusive) is wrong.
pub fn accuracy(predictions: &[Option<String>], labels: &[String]) -> Result<f64, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p.as_deref() == Some(l.as_str()))
        .count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranks(v: Variant, rs: &[Option<usize>]) -> Vec<RetrievalOutcome> {
        rs.iter().map(|r| RetrievalOutcome::with_rank(v, *r)).collect()
    }

    #[test]
    fn hit_examples() {
        let all_one = ranks(Variant::Direct, &[Some(1); 3]);
        assert_eq!(hit_at_m(&all_one, 1).unwrap(), 100.0);
        assert_eq!(mrr(&all_one).unwrap(), 1.0);
        let mixed = ranks(Variant::Direct, &[Some(1), Some(2), Some(11)]);
        assert!((hit_at_m(&mixed, 3).unwrap() - 66.7).abs() < 0.05);
        let absent = ranks(Variant::Direct, &[Some(1), Some(2), None]);
        assert!((mrr(&absent).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(hit_at_m(&[], 1), Err(EvalError::EmptySet)));
        assert!(matches!(mrr(&[]), Err(EvalError::EmptySet)));
    }

    #[test]
    fn from_ranking_finds_truth() {
        let o = RetrievalOutcome::from_ranking("q", Variant::Synonym, vec!["a".into(), "b".into()], "b");
        assert_eq!(o.rank_of_truth, Some(2));
        let o = RetrievalOutcome::from_ranking("q", Variant::Synonym, vec!["a".into()], "z");
        assert_eq!(o.rank_of_truth, None);
    }

    #[test]
    fn similarity_examples() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(explanation_similarity(&s(&["a b", "a b"])).unwrap(), 100.0);
        assert_eq!(explanation_similarity(&s(&["a b", "c d"])).unwrap(), 0.0);
        assert_eq!(explanation_similarity(&s(&["ground risk low", "risk low ground"])).unwrap(), 100.0);
        assert!(matches!(explanation_similarity(&s(&["x"])), Err(EvalError::FewerThanTwo)));
    }

    #[test]
    fn accuracy_examples() {
        let labels: Vec<String> = (0..11).map(|i| format!("v{i}")).collect();
        let mut preds: Vec<Option<String>> = labels.iter().cloned().map(Some).collect();
        assert_eq!(accuracy(&preds, &labels).unwrap(), 100.0);
        preds[3] = None;
        preds[7] = Some("other".into());
        assert!((accuracy(&preds, &labels).unwrap() - 81.8).abs() < 0.05);
        assert!(matches!(accuracy(&preds[..3], &labels), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn table_rendering() {
        let mut outcomes = ranks(Variant::Direct, &[Some(1); 4]);
        outcomes.extend(ranks(Variant::Reworked, &[Some(1), None]));
        let report = RetrievalReport::from_outcomes(&outcomes).unwrap();
        assert_eq!(report.rows.len(), 2);
        let table = report.render_table();
        assert!(table.contains("Direct match"));
        assert!(table.contains("100.0%"));
        assert!(table.contains("0.833"));
        assert_eq!(report.to_json()["overall"]["hit@1"], 83.3);
    }

    proptest! {
        #[test]
        fn metric_orderings(rs in proptest::collection::vec(proptest::option::of(1usize..20), 1..40)) {
            let o = ranks(Variant::Direct, &rs);
            let mut prev = 0.0;
            for m in [1, 2, 3, 5, 10, 20] {
                let h = hit_at_m(&o, m).unwrap();
                prop_assert!(h >= prev);
                prev = h;
            }
            let m = mrr(&o).unwrap();
            prop_assert!(hit_at_m(&o, 1).unwrap() / 100.0 <= m + 1e-12);
            prop_assert!(m <= found_rate(&o).unwrap() / 100.0 + 1e-12);
        }

        #[test]
        fn similarity_ignores_token_order(words in proptest::collection::vec("[a-z]{1,5}", 1..8), other in "[a-z ]{0,20}") {
            let a = words.join(" ");
            let mut rev = words.clone();
            rev.reverse();
            let b = rev.join(" ");
            let s1 = explanation_similarity(&[a.clone(), other.clone()]).unwrap();
            let s2 = explanation_similarity(&[b, other]).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-12);
        }
    }
}
