use regrag_core::context::audit::AuditError;
use regrag_core::corpus::CorpusError;
use regrag_core::eval::EvalError;
use regrag_core::fusion::PipelineError;
use regrag_core::generation::GenerationError;
use regrag_core::indicators::{IndicatorError, InputErrors};

use crate::index_store::IndexError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_INDEX: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Validation(String),
    #[error("invalid operation input: {0}")]
    InvalidInput(InputErrors),
    #[error("not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Export(String),
    #[error("{0}")]
    Internal(String),
}

impl From<IndicatorError> for ServiceError {
    fn from(e: IndicatorError) -> Self {
        match e {
            IndicatorError::InvalidInput(errs) => Self::InvalidInput(errs),
            IndicatorError::UnknownIndicator(_) | IndicatorError::ZeroRuns => Self::Validation(e.to_string()),
            IndicatorError::InvalidCatalog(m) => Self::Config(m),
            IndicatorError::Pipeline(p) => Self::Pipeline(p),
            IndicatorError::Generation(g) => Self::Generation(g),
            IndicatorError::ExportFailed { .. } => Self::Export(e.to_string()),
            IndicatorError::MalformedIndicatorJson { .. } => Self::Internal(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    NotFound,
    BackendUnavailable,
    Index,
    Other,
}

impl ServiceError {
    pub fn class(&self) -> ErrorClass {
        match self {
            Self::Config(_) | Self::Validation(_) | Self::InvalidInput(_) | Self::Corpus(_) => ErrorClass::Validation,
            Self::NotFound(_) => ErrorClass::NotFound,
            Self::Index(_) => ErrorClass::Index,
            Self::Pipeline(PipelineError::StaleIndex(_)) => ErrorClass::Index,
            Self::Pipeline(PipelineError::Config(_)) => ErrorClass::Validation,
            Self::Generation(g) => match g {
                GenerationError::BackendUnavailable { .. }
                | GenerationError::Timeout { .. }
                | GenerationError::MalformedBackendJson(_)
                | GenerationError::InvalidReasoningLevel(_) => ErrorClass::BackendUnavailable,
                GenerationError::MissingCredentials { .. }
                | GenerationError::UnknownBackend(_)
                | GenerationError::MissingPromptFile(_)
                | GenerationError::InvalidParams(_) => ErrorClass::Validation,
            },
            Self::Eval(EvalError::UnknownGroundTruth(_) | EvalError::Fixture { .. }) => ErrorClass::Validation,
            _ => ErrorClass::Other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation | ErrorClass::NotFound => EXIT_VALIDATION,
            ErrorClass::BackendUnavailable => EXIT_BACKEND,
            ErrorClass::Index => EXIT_INDEX,
            ErrorClass::Other => EXIT_FAILURE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.class() {
            ErrorClass::Validation => "validation",
            ErrorClass::NotFound => "not_found",
            ErrorClass::BackendUnavailable => "backend_unavailable",
            ErrorClass::Index => "index",
            ErrorClass::Other => "internal",
        }
    }
}
