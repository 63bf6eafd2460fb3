use std::collections::BTreeMap;

use super::{RankedCandidate, RankedId};

/// Reciprocal rank fusion of the dense and sparse lists.
///
/// Each candidate scores `Σ 1/(k + rank)` over the lists containing it (ranks
/// are 1-based list positions). Output is sorted by score, ties by corpus
/// position; truncation happens in the caller.
pub fn rrf_fuse(dense: &[RankedId], sparse: &[RankedId], rrf_k: usize) -> Vec<RankedCandidate> {
    let mut by_pos: BTreeMap<usize, RankedCandidate> = BTreeMap::new();
    for (i, item) in dense.iter().enumerate() {
        let c = by_pos
            .entry(item.position)
            .or_insert_with(|| RankedCandidate::new(&item.chunk_id, item.position));
        c.dense_rank.get_or_insert(i + 1);
    }
    for (i, item) in sparse.iter().enumerate() {
        let c = by_pos
            .entry(item.position)
            .or_insert_with(|| RankedCandidate::new(&item.chunk_id, item.position));
        c.sparse_rank.get_or_insert(i + 1);
    }
    let k = rrf_k as f64;
    let mut fused: Vec<RankedCandidate> = by_pos
        .into_values()
        .map(|mut c| {
            // dense term first, then sparse; fixed order keeps sums reproducible
            let mut score = 0.0;
            if let Some(r) = c.dense_rank {
                score += 1.0 / (k + r as f64);
            }
            if let Some(r) = c.sparse_rank {
                score += 1.0 / (k + r as f64);
            }
            c.rrf_score = score;
            c
        })
        .collect();
    fused.sort_by(|a, b| {
        b.rrf_score
            .total_cmp(&a.rrf_score)
            .then(a.position.cmp(&b.position))
    });
    fused
}
