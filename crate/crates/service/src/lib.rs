//! Command-line and HTTP front ends over the retrieval and generation core.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod http;
pub mod index_store;

pub use config::RunConfig;
pub use engine::{Engine, IndicatorsResponse, QueryFlags, QueryResponse};
pub use error::ServiceError;
