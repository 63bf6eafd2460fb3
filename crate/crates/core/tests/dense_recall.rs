use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regrag_core::dense::{DenseBackend, DenseIndex, HnswParams};
use regrag_core::embedding::{dot, l2_normalize, Embedding};

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if let Ok(e) = l2_normalize(&Embedding::raw(v)) {
            return e;
        }
    }
}

/// Brute-force top-k by independent inner-product scan.
fn brute_force(vectors: &[Embedding], query: &Embedding, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, dot(&v.values, &query.values)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

#[test]
fn flat_matches_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for round in 0..10 {
        let n = rng.random_range(1..=500);
        let vectors: Vec<_> = (0..n).map(|_| random_unit(&mut rng, 16)).collect();
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        let idx = DenseIndex::from_vectors(vectors.clone(), ids, DenseBackend::FlatExact, HnswParams::default()).unwrap();
        let q = random_unit(&mut rng, 16);
        let k = rng.random_range(1..=n + 5);
        let hits = idx.search(&q, k).unwrap();
        let oracle = brute_force(&vectors, &q, k);
        assert_eq!(hits.len(), oracle.len(), "round {round}");
        for (h, (pos, s)) in hits.iter().zip(&oracle) {
            assert_eq!(h.position, *pos);
            assert!((f64::from(h.score) - s).abs() <= 1e-6);
        }
    }
}

#[test]
fn hnsw_recall_against_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let vectors: Vec<_> = (0..1000).map(|_| random_unit(&mut rng, 32)).collect();
    let ids: Vec<String> = (0..1000).map(|i| format!("c{i}")).collect();
    let flat = DenseIndex::from_vectors(vectors.clone(), ids.clone(), DenseBackend::FlatExact, HnswParams::default()).unwrap();
    let hnsw = DenseIndex::from_vectors(vectors, ids, DenseBackend::Hnsw, HnswParams::default()).unwrap();
    let mut overlap = 0usize;
    for _ in 0..100 {
        let q = random_unit(&mut rng, 32);
        let exact: std::collections::HashSet<_> = flat.search(&q, 10).unwrap().into_iter().map(|h| h.position).collect();
        overlap += hnsw.search(&q, 10).unwrap().iter().filter(|h| exact.contains(&h.position)).count();
    }
    let recall = overlap as f64 / 1000.0;
    assert!(recall >= 0.95, "recall {recall}");
}
