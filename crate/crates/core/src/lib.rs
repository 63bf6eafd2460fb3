//! Grounded hybrid retrieval for regulatory corpora.
//!
//! Stages, in execution order: [`corpus`] loading, [`embedding`] and
//! [`dense`] search, [`sparse`] BM25, [`fusion`] (RRF, MMR, post-scoring,
//! late-interaction rerank, elbow filter), [`context`] assembly and audit,
//! [`generation`] behind a pluggable backend. [`indicators`] and [`eval`]
//! build on the same pipeline.

pub mod corpus;
pub mod dense;
pub mod embedding;
pub mod sparse;
pub mod fusion;
pub mod context;
pub mod generation;
pub mod indicators;
pub mod eval;
