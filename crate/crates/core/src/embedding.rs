//! Text encoders and L2 normalization.
//!
//! Encoders sit behind the [`Encoder`] trait and are looked up by name in an
//! [`EncoderRegistry`]. The built-in [`HashingEncoder`] is a deterministic hashed
//! bag-of-words: each token lands in one of `d` buckets (FNV-1a), counts are
//! accumulated and then square-root damped. It makes no claim of semantic
//! quality; it exists so every stage downstream can be checked by hand.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::sparse::tokenize;

pub const DEFAULT_DIMENSION: usize = 384;
pub const HASHING_ENCODER: &str = "hashing-bow";

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EmbeddingError {
    #[error("unknown encoder {0:?}")]
    UnknownEncoder(String),
    #[error("encoder backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("encoder dimension must be positive")]
    ZeroDimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f32>,
    pub normalized: bool,
}

impl Embedding {
    pub fn raw(values: Vec<f32>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub name: String,
    pub dimension: usize,
    pub deterministic: bool,
}

pub trait Encoder: Send + Sync {
    fn spec(&self) -> &EncoderSpec;

    /// Unnormalized embedding of `text`.
    fn encode(&self, text: &str) -> Result<Embedding, EmbeddingError>;

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        texts.iter().map(|t| self.encode(t)).collect()
    }
}

/// Scales `e` to unit length. Accumulates in f64 before storing f32.
pub fn l2_normalize(e: &Embedding) -> Result<Embedding, EmbeddingError> {
    let norm = e.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(Embedding {
        values: e
            .values
            .iter()
            .map(|&v| (f64::from(v) / norm) as f32)
            .collect(),
        normalized: true,
    })
}

/// Inner product, accumulated in f64.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// FNV-1a over the UTF-8 bytes of `token`.
pub fn fnv1a(token: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in token.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone)]
pub struct HashingEncoder {
    spec: EncoderSpec,
}

impl HashingEncoder {
    pub fn new(dimension: usize) -> Result<Self, EmbeddingError> {
        if dimension == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(Self {
            spec: EncoderSpec {
                name: HASHING_ENCODER.to_string(),
                dimension,
                deterministic: true,
            },
        })
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token) % self.spec.dimension as u64) as usize
    }

    /// Undamped bucket counts; exposed for additivity checks.
    pub fn bucket_counts(&self, text: &str) -> Vec<u32> {
        let mut counts = vec![0u32; self.spec.dimension];
        for tok in tokenize(text) {
            counts[self.bucket(&tok)] += 1;
        }
        counts
    }
}

impl Encoder for HashingEncoder {
    fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    fn encode(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let values = self
            .bucket_counts(text)
            .into_iter()
            .map(|c| (f64::from(c)).sqrt() as f32)
            .collect();
        Ok(Embedding::raw(values))
    }
}

/// Encoders keyed by name.
#[derive(Clone, Default)]
pub struct EncoderRegistry {
    encoders: BTreeMap<String, Arc<dyn Encoder>>,
}

impl EncoderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding the hashing encoder at `dimension`.
    pub fn with_defaults(dimension: usize) -> Result<Self, EmbeddingError> {
        let mut reg = Self::new();
        reg.register(Arc::new(HashingEncoder::new(dimension)?));
        Ok(reg)
    }

    pub fn register(&mut self, encoder: Arc<dyn Encoder>) {
        self.encoders.insert(encoder.spec().name.clone(), encoder);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Encoder>, EmbeddingError> {
        self.encoders
            .get(name)
            .cloned()
            .ok_or_else(|| EmbeddingError::UnknownEncoder(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.encoders.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enc() -> HashingEncoder {
        HashingEncoder::new(DEFAULT_DIMENSION).unwrap()
    }

    #[test]
    fn deterministic_and_empty() {
        let e = enc();
        assert_eq!(e.encode("x").unwrap(), e.encode("x").unwrap());
        let z = e.encode("").unwrap();
        assert_eq!(z.dim(), DEFAULT_DIMENSION);
        assert!(z.is_zero());
    }

    #[test]
    fn repeated_term_is_sqrt_damped() {
        let e = enc();
        let b = e.bucket("risk");
        let once = e.encode("risk").unwrap();
        let twice = e.encode("risk risk").unwrap();
        assert_eq!(once.values[b], 1.0);
        assert_eq!(twice.values[b], 2f32.sqrt());
        let nonzero: Vec<_> = twice.values.iter().filter(|v| **v != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
    }

    #[test]
    fn normalize_examples() {
        let n = l2_normalize(&Embedding::raw(vec![3.0, 4.0])).unwrap();
        assert_eq!(n.values, vec![0.6, 0.8]);
        assert!(n.normalized);
        let again = l2_normalize(&n).unwrap();
        for (a, b) in n.values.iter().zip(&again.values) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert_eq!(
            l2_normalize(&Embedding::raw(vec![0.0; 4])),
            Err(EmbeddingError::ZeroVector)
        );
    }

    #[test]
    fn registry_lookup() {
        let reg = EncoderRegistry::with_defaults(16).unwrap();
        assert_eq!(reg.get(HASHING_ENCODER).unwrap().spec().dimension, 16);
        assert!(matches!(
            reg.get("minilm"),
            Err(EmbeddingError::UnknownEncoder(n)) if n == "minilm"
        ));
    }

    proptest! {
        #[test]
        fn normalized_vectors_are_unit(v in proptest::collection::vec(-100f32..100f32, 1..64)) {
            let e = Embedding::raw(v);
            prop_assume!(!e.is_zero());
            let n = l2_normalize(&e).unwrap();
            prop_assert!((n.norm() - 1.0).abs() <= 1e-6);
            let again = l2_normalize(&n).unwrap();
            for (a, b) in n.values.iter().zip(&again.values) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }

        #[test]
        fn unit_dot_is_bounded(
            a in proptest::collection::vec(-10f32..10f32, 8),
            b in proptest::collection::vec(-10f32..10f32, 8),
        ) {
            let (a, b) = (Embedding::raw(a), Embedding::raw(b));
            prop_assume!(!a.is_zero() && !b.is_zero());
            let d = dot(&l2_normalize(&a).unwrap().values, &l2_normalize(&b).unwrap().values);
            prop_assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&d));
        }

        #[test]
        fn bucket_counts_are_additive(a in "[a-z ]{0,30}", b in "[a-z ]{0,30}") {
            let e = HashingEncoder::new(32).unwrap();
            let joined = e.bucket_counts(&format!("{a} {b}"));
            let sum: Vec<u32> = e.bucket_counts(&a).iter().zip(e.bucket_counts(&b)).map(|(x, y)| x + y).collect();
            prop_assert_eq!(joined, sum);
        }
    }
}
