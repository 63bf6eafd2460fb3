//! Single-indicator assessment requests with repeated runs and majority vote.

mod catalog;
mod vote;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::context::{assemble_from_run, ContextBundle, SourceRef};
use crate::eval::explanation_similarity;
use crate::fusion::{HybridRetriever, PipelineError, RetrievalRun};
use crate::generation::{
    parse_single_object, GenerationBackend, GenerationError, GenerationParams, Message, MessageSequence,
    PromptSet, Role,
};

pub use catalog::{CoherenceRule, Discriminators, IndicatorCatalog, IndicatorSpec, RuleConflict, RuleTrigger, Vocabulary};
pub use vote::{majority_vote, tally, value_consistency, VoteOutcome};

pub const DEFAULT_RUNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputField {
    MassCategory,
    FlightMode,
    GroundEnvironment,
    AirspaceType,
    AltitudeCategory,
}

impl InputField {
    pub const ALL: [InputField; 5] = [
        Self::MassCategory,
        Self::FlightMode,
        Self::GroundEnvironment,
        Self::AirspaceType,
        Self::AltitudeCategory,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MassCategory => "mass_category",
            Self::FlightMode => "flight_mode",
            Self::GroundEnvironment => "ground_environment",
            Self::AirspaceType => "airspace_type",
            Self::AltitudeCategory => "altitude_category",
        }
    }
}

impl fmt::Display for InputField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationInput {
    pub mass_category: String,
    pub flight_mode: String,
    pub ground_environment: String,
    pub airspace_type: String,
    pub altitude_category: String,
}

impl OperationInput {
    pub fn get(&self, field: InputField) -> &str {
        match field {
            InputField::MassCategory => &self.mass_category,
            InputField::FlightMode => &self.flight_mode,
            InputField::GroundEnvironment => &self.ground_environment,
            InputField::AirspaceType => &self.airspace_type,
            InputField::AltitudeCategory => &self.altitude_category,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldError {
    MissingField { field: String },
    InvalidValue { field: String, value: String, allowed: Vec<String> },
    UnknownField { field: String },
    NotAnObject,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingField { field } => write!(f, "missing field {field}"),
            Self::InvalidValue { field, value, allowed } => {
                write!(f, "invalid value {value:?} for {field}; allowed: {}", allowed.join(", "))
            }
            Self::UnknownField { field } => write!(f, "unknown field {field}"),
            Self::NotAnObject => f.write_str("operation input must be a JSON object"),
        }
    }
}

/// All field-level problems found in one operation input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputErrors(pub Vec<FieldError>);

impl fmt::Display for InputErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

impl std::error::Error for InputErrors {}

#[derive(Debug, thiserror::Error)]
pub enum IndicatorError {
    #[error("invalid operation input: {0}")]
    InvalidInput(#[from] InputErrors),
    #[error("unknown indicator {0:?}")]
    UnknownIndicator(String),
    #[error("invalid indicator catalog: {0}")]
    InvalidCatalog(String),
    #[error("run {run}: output is not a valid indicator object: {reason}")]
    MalformedIndicatorJson { run: usize, reason: String },
    #[error("at least one run is required")]
    ZeroRuns,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("cannot write indicator export {}: {reason}", path.display())]
    ExportFailed { path: PathBuf, reason: String },
}

/// Checks every field of a raw operation input against its vocabulary. No
/// value is ever inferred; all problems are reported together.
pub fn validate_operation_input(raw: &serde_json::Value, vocab: &Vocabulary) -> Result<OperationInput, InputErrors> {
    let Some(obj) = raw.as_object() else {
        return Err(InputErrors(vec![FieldError::NotAnObject]));
    };
    let mut errors = Vec::new();
    let mut values: BTreeMap<InputField, String> = BTreeMap::new();
    for field in InputField::ALL {
        let allowed = vocab.get(&field).cloned().unwrap_or_default();
        match obj.get(field.as_str()) {
            None | Some(serde_json::Value::Null) => errors.push(FieldError::MissingField { field: field.to_string() }),
            Some(serde_json::Value::String(s)) if allowed.contains(s) => {
                values.insert(field, s.clone());
            }
            Some(other) => errors.push(FieldError::InvalidValue {
                field: field.to_string(),
                value: other.as_str().map_or_else(|| other.to_string(), str::to_string),
                allowed,
            }),
        }
    }
    for key in obj.keys() {
        if !InputField::ALL.iter().any(|f| f.as_str() == key) {
            errors.push(FieldError::UnknownField { field: key.clone() });
        }
    }
    if !errors.is_empty() {
        return Err(InputErrors(errors));
    }
    let mut take = |f| values.remove(&f).expect("validated");
    Ok(OperationInput {
        mass_category: take(InputField::MassCategory),
        flight_mode: take(InputField::FlightMode),
        ground_environment: take(InputField::GroundEnvironment),
        airspace_type: take(InputField::AirspaceType),
        altitude_category: take(InputField::AltitudeCategory),
    })
}

/// Base terms, then discriminators for each relevant field in spec order, then
/// hint terms. Repeated terms keep their first position.
pub fn build_indicator_query(spec: &IndicatorSpec, op: &OperationInput, catalog: &IndicatorCatalog) -> Vec<String> {
    let mut terms: Vec<String> = Vec::new();
    let mut push = |t: &String| {
        if !terms.contains(t) {
            terms.push(t.clone());
        }
    };
    spec.base_query_terms.iter().for_each(&mut push);
    for &field in &spec.relevant_input_fields {
        catalog.discriminator_terms(field, op.get(field)).iter().for_each(&mut push);
    }
    spec.hint_terms.iter().for_each(&mut push);
    terms
}

pub fn render_indicator_request(spec: &IndicatorSpec, op: &OperationInput, prompts: &PromptSet) -> String {
    let inputs: Vec<String> = spec
        .relevant_input_fields
        .iter()
        .map(|&f| format!("{f}: {}", op.get(f)))
        .collect();
    prompts
        .indicator_request
        .replace("{indicator_name}", &spec.name)
        .replace("{value_guidance}", &format!("Allowed values: {}", spec.allowed_values.join(", ")))
        .replace("{instructions}", &spec.instructions.join("\n"))
        .replace("{operation_inputs}", &inputs.join("\n"))
}

/// System, developer, request, context.
pub fn build_indicator_messages(
    spec: &IndicatorSpec,
    op: &OperationInput,
    context: &ContextBundle,
    prompts: &PromptSet,
) -> MessageSequence {
    MessageSequence(vec![
        Message::new(Role::System, prompts.indicator_system.clone()),
        Message::new(Role::Developer, prompts.developer.clone()),
        Message::new(Role::User, render_indicator_request(spec, op, prompts)),
        Message::new(Role::User, prompts.context_message(&context.context_text)),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorOutput {
    pub name: String,
    pub value: String,
    pub explanation: String,
}

/// Exactly one JSON object with exactly the string keys name, value and
/// explanation, naming the requested indicator. Value membership is checked
/// separately.
pub fn parse_indicator_output(text: &str, spec: &IndicatorSpec, run: usize) -> Result<IndicatorOutput, IndicatorError> {
    let malformed = |reason: String| IndicatorError::MalformedIndicatorJson { run, reason };
    let obj = parse_single_object(text).map_err(malformed)?;
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    if keys != ["explanation", "name", "value"] {
        return Err(malformed(format!("expected keys name, value, explanation; got {}", keys.join(", "))));
    }
    let field = |k: &str| {
        obj[k]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| malformed(format!("{k} is not a string")))
    };
    let out = IndicatorOutput {
        name: field("name")?,
        value: field("value")?,
        explanation: field("explanation")?,
    };
    if out.name != spec.name {
        return Err(malformed(format!("name {:?} does not match requested {}", out.name, spec.name)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Valid,
    InvalidValue,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub status: RunStatus,
    pub value: Option<String>,
    pub explanation: Option<String>,
    pub error: Option<String>,
    pub context_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorResult {
    pub name: String,
    /// Majority value; `None` when inconclusive, invalid or low confidence.
    pub value: Option<String>,
    pub explanation: Option<String>,
    pub runs: Vec<RunRecord>,
    pub valid_runs: usize,
    pub parse_failures: usize,
    pub invalid_values: usize,
    pub vote_count: usize,
    pub value_consistency: Option<f64>,
    pub explanation_similarity: Option<f64>,
    pub inconclusive: bool,
    /// Values sharing the top count when the vote is inconclusive.
    pub leading_values: Vec<String>,
    /// No run produced an allowed value.
    pub invalid: bool,
    pub low_confidence: bool,
    pub clarification: Option<String>,
    pub query_terms: Vec<String>,
    pub included_ids: Vec<String>,
    pub sources: Vec<SourceRef>,
    pub audit_id: Option<String>,
}

/// A result plus the evidence it was produced from.
#[derive(Debug, Clone)]
pub struct IndicatorOutcome {
    pub result: IndicatorResult,
    pub query: String,
    pub retrieval: RetrievalRun,
    pub bundle: ContextBundle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceWarning {
    pub rule_id: String,
    pub indicators: Vec<String>,
    pub message: String,
}

/// Evaluates the rule table over decided values. Advisory only.
pub fn check_cross_indicator_coherence(results: &[IndicatorResult], rules: &[CoherenceRule]) -> Vec<CoherenceWarning> {
    let decided = |name: &str| {
        results
            .iter()
            .find(|r| r.name == name)
            .and_then(|r| r.value.as_deref())
    };
    let mut warnings = Vec::new();
    for rule in rules {
        let Some(v) = decided(&rule.when.indicator) else {
            continue;
        };
        if !rule.when.values.iter().any(|x| x == v) {
            continue;
        }
        for other in &rule.conflicts_with.indicators {
            if decided(other).is_some_and(|ov| rule.conflicts_with.values.iter().any(|x| x == ov)) {
                warnings.push(CoherenceWarning {
                    rule_id: rule.id.clone(),
                    indicators: vec![rule.when.indicator.clone(), other.clone()],
                    message: rule.message.clone(),
                });
            }
        }
    }
    warnings
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub op: OperationInput,
    pub indicators: BTreeMap<String, IndicatorResult>,
    pub warnings: Vec<CoherenceWarning>,
}

impl IndicatorReport {
    pub fn new(op: OperationInput, results: Vec<IndicatorResult>, rules: &[CoherenceRule]) -> Self {
        let warnings = check_cross_indicator_coherence(&results, rules);
        Self {
            op,
            indicators: results.into_iter().map(|r| (r.name.clone(), r)).collect(),
            warnings,
        }
    }

    pub fn export_json(&self, path: &Path) -> Result<(), IndicatorError> {
        let fail = |reason: String| IndicatorError::ExportFailed {
            path: path.to_path_buf(),
            reason,
        };
        let text = serde_json::to_string_pretty(self).map_err(|e| fail(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| fail(e.to_string()))
    }
}

pub struct IndicatorEngine<'a> {
    pub retriever: &'a HybridRetriever,
    pub backend: &'a dyn GenerationBackend,
    pub prompts: &'a PromptSet,
    pub catalog: &'a IndicatorCatalog,
    pub params: GenerationParams,
    pub budget: usize,
}

impl IndicatorEngine<'_> {
    /// Runs one indicator `runs` times. Retrieval is repeated per run and its
    /// context digest recorded; generation calls are issued in run order.
    pub fn request_indicator(&self, name: &str, op: &OperationInput, runs: usize) -> Result<IndicatorOutcome, IndicatorError> {
        if runs == 0 {
            return Err(IndicatorError::ZeroRuns);
        }
        self.params.validate()?;
        let spec = self.catalog.spec(name)?;
        let terms = build_indicator_query(spec, op, self.catalog);
        let query = terms.join(" ");

        let mut result = IndicatorResult {
            name: spec.name.clone(),
            value: None,
            explanation: None,
            runs: Vec::with_capacity(runs),
            valid_runs: 0,
            parse_failures: 0,
            invalid_values: 0,
            vote_count: 0,
            value_consistency: None,
            explanation_similarity: None,
            inconclusive: false,
            leading_values: Vec::new(),
            invalid: false,
            low_confidence: false,
            clarification: None,
            query_terms: terms,
            included_ids: Vec::new(),
            sources: Vec::new(),
            audit_id: None,
        };

        let mut first: Option<(RetrievalRun, ContextBundle)> = None;
        for run in 1..=runs {
            let retrieval = self.retriever.retrieve(&query)?;
            let bundle = assemble_from_run(&retrieval, self.retriever.corpus(), self.budget);
            if bundle.is_empty() {
                result.low_confidence = true;
                result.clarification = Some(format!(
                    "No supporting evidence was retrieved for {}. Check the operation inputs or extend the corpus with the governing documents, then retry.",
                    spec.name
                ));
                return Ok(IndicatorOutcome { result, query, retrieval, bundle });
            }
            let digest = bundle.digest();
            let messages = build_indicator_messages(spec, op, &bundle, self.prompts);
            let completion = self.backend.complete(&messages, &self.params)?;
            let record = match parse_indicator_output(&completion.text, spec, run) {
                Ok(out) if spec.allows(&out.value) => RunRecord {
                    run,
                    status: RunStatus::Valid,
                    value: Some(out.value),
                    explanation: Some(out.explanation),
                    error: None,
                    context_digest: digest,
                },
                Ok(out) => RunRecord {
                    run,
                    status: RunStatus::InvalidValue,
                    error: Some(format!("value {:?} not in allowed values", out.value)),
                    value: Some(out.value),
                    explanation: Some(out.explanation),
                    context_digest: digest,
                },
                Err(e) => RunRecord {
                    run,
                    status: RunStatus::Malformed,
                    value: None,
                    explanation: None,
                    error: Some(e.to_string()),
                    context_digest: digest,
                },
            };
            result.runs.push(record);
            if first.is_none() {
                first = Some((retrieval, bundle));
            }
        }

        let valid: Vec<&RunRecord> = result.runs.iter().filter(|r| r.status == RunStatus::Valid).collect();
        let values: Vec<String> = valid.iter().filter_map(|r| r.value.clone()).collect();
        result.valid_runs = values.len();
        result.parse_failures = result.runs.iter().filter(|r| r.status == RunStatus::Malformed).count();
        result.invalid_values = result.runs.iter().filter(|r| r.status == RunStatus::InvalidValue).count();
        result.value_consistency = value_consistency(&values);
        let explanations: Vec<String> = valid.iter().filter_map(|r| r.explanation.clone()).collect();
        result.explanation_similarity = explanation_similarity(&explanations).ok();
        match majority_vote(&values) {
            VoteOutcome::Decided { value, count } => {
                result.explanation = valid
                    .iter()
                    .find(|r| r.value.as_deref() == Some(value.as_str()))
                    .and_then(|r| r.explanation.clone());
                result.value = Some(value);
                result.vote_count = count;
            }
            VoteOutcome::Inconclusive { leading, count } => {
                result.inconclusive = true;
                result.leading_values = leading;
                result.vote_count = count;
            }
            VoteOutcome::NoVotes => result.invalid = true,
        }

        let (retrieval, bundle) = first.expect("at least one run completed");
        result.included_ids = bundle.included_ids.clone();
        result.sources = bundle.sources.clone();
        Ok(IndicatorOutcome { result, query, retrieval, bundle })
    }
}
