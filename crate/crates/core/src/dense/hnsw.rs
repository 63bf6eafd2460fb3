//! Hierarchical navigable small-world graph over unit vectors.
//!
//! Similarity is the inner product (cosine on unit vectors). Layer 0 keeps up to
//! `2·M` links per node, upper layers up to `M`. Levels are drawn from a seeded
//! ChaCha stream so a build is reproducible from its header.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 32,
            ef_construction: 200,
            ef_search: 128,
            seed: 0x0005_eed0_fa11,
        }
    }
}

/// Candidate with total order: higher similarity first, then lower position.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    sim: f64,
    node: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswGraph {
    pub(crate) params: HnswParams,
    /// Neighbor positions, indexed as `links[node][layer]`.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
    pub(crate) entry_point: u32,
    pub(crate) max_layer: usize,
}

struct VectorView<'a> {
    data: &'a [f32],
    dim: usize,
}

impl VectorView<'_> {
    fn get(&self, node: u32) -> &[f32] {
        let start = node as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    fn sim(&self, query: &[f32], node: u32) -> f64 {
        dot(query, self.get(node))
    }
}

impl HnswGraph {
    /// Builds the graph over `data` (row-major, `n × dim`).
    pub fn build(data: &[f32], dim: usize, params: HnswParams) -> Self {
        let n = data.len() / dim;
        let view = VectorView { data, dim };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let level_mult = 1.0 / (params.m.max(2) as f64).ln();

        let mut graph = HnswGraph {
            params,
            links: Vec::with_capacity(n),
            entry_point: 0,
            max_layer: 0,
        };
        for node in 0..n as u32 {
            let r: f64 = rng.random::<f64>();
            let level = (-(1.0 - r).ln() * level_mult).floor() as usize;
            graph.insert(&view, node, level);
        }
        graph
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, view: &VectorView<'_>, node: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        if node == 0 {
            self.entry_point = 0;
            self.max_layer = level;
            return;
        }
        let query = view.get(node).to_vec();
        let mut entry = Scored {
            sim: view.sim(&query, self.entry_point),
            node: self.entry_point,
        };
        for layer in (level + 1..=self.max_layer).rev() {
            entry = self.greedy(view, &query, entry, layer);
        }
        let mut entries = vec![entry];
        for layer in (0..=level.min(self.max_layer)).rev() {
            let found = self.search_layer(view, &query, &entries, self.params.ef_construction, layer);
            let neighbors = self.select_neighbors(view, &found, self.params.m);
            self.links[node as usize][layer] = neighbors.iter().map(|s| s.node).collect();
            for nb in &neighbors {
                self.connect(view, nb.node, node, layer);
            }
            entries = found;
        }
        if level > self.max_layer {
            self.max_layer = level;
            self.entry_point = node;
        }
    }

    fn connect(&mut self, view: &VectorView<'_>, from: u32, to: u32, layer: usize) {
        let cap = self.max_links(layer);
        let list = &mut self.links[from as usize][layer];
        list.push(to);
        if list.len() <= cap {
            return;
        }
        let base = view.get(from).to_vec();
        let mut scored: Vec<Scored> = list
            .iter()
            .map(|&nb| Scored {
                sim: view.sim(&base, nb),
                node: nb,
            })
            .collect();
        scored.sort_by(|a, b| b.cmp(a));
        let kept = self.select_neighbors(view, &scored, cap);
        self.links[from as usize][layer] = kept.into_iter().map(|s| s.node).collect();
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the base
    /// than to every neighbor kept so far; backfill with the nearest discarded.
    /// `candidates` must be sorted best first.
    fn select_neighbors(&self, view: &VectorView<'_>, candidates: &[Scored], m: usize) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut discarded = Vec::new();
        for &cand in candidates {
            if kept.len() >= m {
                break;
            }
            let c = view.get(cand.node);
            let dominated = kept.iter().any(|k| dot(c, view.get(k.node)) > cand.sim);
            if dominated {
                discarded.push(cand);
            } else {
                kept.push(cand);
            }
        }
        for cand in discarded {
            if kept.len() >= m {
                break;
            }
            kept.push(cand);
        }
        kept
    }

    fn greedy(&self, view: &VectorView<'_>, query: &[f32], mut best: Scored, layer: usize) -> Scored {
        loop {
            let mut improved = false;
            for &nb in &self.links[best.node as usize][layer] {
                let cand = Scored {
                    sim: view.sim(query, nb),
                    node: nb,
                };
                if cand > best {
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Best-first beam search on one layer; returns up to `ef` nodes, best first.
    fn search_layer(
        &self,
        view: &VectorView<'_>,
        query: &[f32],
        entries: &[Scored],
        ef: usize,
        layer: usize,
    ) -> Vec<Scored> {
        let mut visited: HashSet<u32> = entries.iter().map(|s| s.node).collect();
        let mut frontier: BinaryHeap<Scored> = entries.iter().copied().collect();
        // min-heap of current results via Reverse ordering
        let mut results: BinaryHeap<std::cmp::Reverse<Scored>> =
            entries.iter().copied().map(std::cmp::Reverse).collect();
        while results.len() > ef {
            results.pop();
        }
        while let Some(cur) = frontier.pop() {
            let worst = results.peek().map(|r| r.0);
            if let Some(w) = worst {
                if results.len() >= ef && cur < w {
                    break;
                }
            }
            for &nb in &self.links[cur.node as usize][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                let cand = Scored {
                    sim: view.sim(query, nb),
                    node: nb,
                };
                let admit = results.len() < ef || results.peek().is_some_and(|w| cand > w.0);
                if admit {
                    frontier.push(cand);
                    results.push(std::cmp::Reverse(cand));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Approximate top-`k` as `(position, similarity)`, best first.
    pub fn search(&self, data: &[f32], dim: usize, query: &[f32], k: usize) -> Vec<(usize, f64)> {
        if self.links.is_empty() {
            return Vec::new();
        }
        let view = VectorView { data, dim };
        let mut entry = Scored {
            sim: view.sim(query, self.entry_point),
            node: self.entry_point,
        };
        for layer in (1..=self.max_layer).rev() {
            entry = self.greedy(&view, query, entry, layer);
        }
        let ef = self.params.ef_search.max(k);
        let mut found = self.search_layer(&view, query, &[entry], ef, 0);
        found.truncate(k);
        found
            .into_iter()
            .map(|s| (s.node as usize, s.sim))
            .collect()
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn max_layer(&self) -> usize {
        self.max_layer
    }

    /// Largest per-layer degree observed; bounded by `2·M` at layer 0, `M` above.
    pub fn max_degree(&self, layer: usize) -> usize {
        self.links
            .iter()
            .filter_map(|l| l.get(layer))
            .map(Vec::len)
            .max()
            .unwrap_or(0)
    }
}
