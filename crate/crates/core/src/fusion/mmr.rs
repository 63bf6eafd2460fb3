use crate::embedding::dot;

/// Greedy maximal marginal relevance over unit vectors.
///
/// First pick maximizes `cos(q, c)`; each later pick maximizes
/// `λ·cos(q, c) − (1 − λ)·max_{s ∈ selected} cos(c, s)`. Ties go to the lower
/// candidate index. Returns candidate indices in selection order, at most `m`.
pub fn mmr_select(candidates: &[&[f32]], query: &[f32], lambda: f64, m: usize) -> Vec<usize> {
    let relevance: Vec<f64> = candidates.iter().map(|c| dot(query, c)).collect();
    // running max similarity to anything already selected
    let mut redundancy = vec![f64::NEG_INFINITY; candidates.len()];
    let mut taken = vec![false; candidates.len()];
    let mut order = Vec::with_capacity(m.min(candidates.len()));

    while order.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..candidates.len() {
            if taken[i] {
                continue;
            }
            let score = if order.is_empty() {
                relevance[i]
            } else {
                lambda * relevance[i] - (1.0 - lambda) * redundancy[i]
            };
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let Some((pick, _)) = best else { break };
        taken[pick] = true;
        order.push(pick);
        for i in 0..candidates.len() {
            if !taken[i] {
                redundancy[i] = redundancy[i].max(dot(candidates[i], candidates[pick]));
            }
        }
    }
    order
}
