//! Message construction, decoding parameters and the backend boundary.
//!
//! No model ships with this crate. Backends implement [`GenerationBackend`];
//! the mocks in [`mock`] cover tests and offline runs, and [`openai`] talks to
//! any OpenAI-compatible chat completions endpoint.

pub mod mock;
pub mod openai;
mod prompts;

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::context::ContextBundle;

pub use prompts::{PromptSet, PROMPT_FILES};

/// Exact refusal sentence mandated for an empty context.
pub const REFUSAL: &str = "I cannot provide an answer for this question";
pub const DEFAULT_MAX_SUBQUERIES: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("generation backend {backend} unavailable: {reason}; check the endpoint and retry")]
    BackendUnavailable { backend: String, reason: String },
    #[error("generation backend {backend} timed out after {secs}s; retry or raise the timeout")]
    Timeout { backend: String, secs: u64 },
    #[error("missing credentials: set the {var} environment variable")]
    MissingCredentials { var: String },
    #[error("unknown generation backend {0:?}")]
    UnknownBackend(String),
    #[error("backend output is not a single JSON object: {0}")]
    MalformedBackendJson(String),
    #[error("invalid reasoning_level {0:?}; expected none, low, medium or high")]
    InvalidReasoningLevel(String),
    #[error("prompt file missing: {}", .0.display())]
    MissingPromptFile(PathBuf),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Low,
    #[default]
    Medium,
    High,
}

impl std::str::FromStr for ReasoningEffort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            other => Err(format!("unknown reasoning effort {other:?}")),
        }
    }
}

impl ReasoningEffort {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    /// Completion-only token limit.
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub presence_penalty: f64,
    pub frequency_penalty: f64,
    pub reasoning_effort: ReasoningEffort,
    pub completions_per_query: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 56_000,
            temperature: 0.2,
            top_p: 0.9,
            presence_penalty: 0.0,
            frequency_penalty: 0.0,
            reasoning_effort: ReasoningEffort::Medium,
            completions_per_query: 1,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GenerationError::InvalidParams("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GenerationError::InvalidParams("top_p must lie in (0, 1]".into()));
        }
        if self.completions_per_query != 1 {
            return Err(GenerationError::InvalidParams(
                "completions_per_query must be 1".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(GenerationError::InvalidParams("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Developer,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageSequence(pub Vec<Message>);

impl MessageSequence {
    pub fn messages(&self) -> &[Message] {
        &self.0
    }

    pub fn roles(&self) -> Vec<Role> {
        self.0.iter().map(|m| m.role).collect()
    }

    pub fn last(&self) -> Option<&Message> {
        self.0.last()
    }
}

/// One exchange of prior conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub reasoning_trace: Option<String>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            reasoning_trace: None,
        }
    }
}

pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, messages: &MessageSequence, params: &GenerationParams) -> Result<Completion, GenerationError>;

    /// Incremental variant. Deltas concatenate to the returned text. The
    /// default delivers the whole completion as one delta.
    fn complete_streaming(
        &self,
        messages: &MessageSequence,
        params: &GenerationParams,
        on_delta: &mut dyn FnMut(&str),
    ) -> Result<Completion, GenerationError> {
        let c = self.complete(messages, params)?;
        on_delta(&c.text);
        Ok(c)
    }
}

#[derive(Default, Clone)]
pub struct BackendRegistry {
    backends: HashMap<String, Arc<dyn GenerationBackend>>,
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendRegistry").field("names", &self.names()).finish()
    }
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, backend: Arc<dyn GenerationBackend>) {
        self.backends.insert(backend.name().to_string(), backend);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn GenerationBackend>, GenerationError> {
        self.backends
            .get(name)
            .cloned()
            .ok_or_else(|| GenerationError::UnknownBackend(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<_> = self.backends.keys().cloned().collect();
        names.sort();
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningLevel {
    None,
    Low,
    Medium,
    High,
}

impl ReasoningLevel {
    pub fn parse(s: &str) -> Result<Self, GenerationError> {
        match s {
            "none" => Ok(Self::None),
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            other => Err(GenerationError::InvalidReasoningLevel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuery {
    pub query: String,
    pub reasoning_level: ReasoningLevel,
}

/// Parses text that must be exactly one JSON object, surrounding whitespace
/// aside.
pub fn parse_single_object(text: &str) -> Result<serde_json::Map<String, serde_json::Value>, String> {
    match serde_json::from_str::<serde_json::Value>(text.trim()) {
        Ok(serde_json::Value::Object(map)) => Ok(map),
        Ok(_) => Err("top-level value is not an object".into()),
        Err(e) => Err(e.to_string()),
    }
}

pub fn parse_subqueries(text: &str, n: usize) -> Result<Vec<SubQuery>, GenerationError> {
    let obj = parse_single_object(text).map_err(GenerationError::MalformedBackendJson)?;
    let list = match obj.get("queries") {
        Some(serde_json::Value::Array(list)) if obj.len() == 1 => list,
        _ => {
            return Err(GenerationError::MalformedBackendJson(
                "expected a single key \"queries\" holding a list".into(),
            ))
        }
    };
    let mut out = Vec::with_capacity(list.len().min(n));
    for entry in list {
        let query = entry
            .get("query")
            .and_then(|q| q.as_str())
            .ok_or_else(|| GenerationError::MalformedBackendJson("query entry without a string query".into()))?;
        let level = entry
            .get("reasoning_level")
            .and_then(|l| l.as_str())
            .ok_or_else(|| {
                GenerationError::MalformedBackendJson("query entry without a string reasoning_level".into())
            })?;
        out.push(SubQuery {
            query: query.to_string(),
            reasoning_level: ReasoningLevel::parse(level)?,
        });
    }
    out.truncate(n);
    Ok(out)
}

pub fn build_subquery_messages(query: &str, n: usize, prompts: &PromptSet) -> MessageSequence {
    MessageSequence(vec![
        Message::new(Role::System, prompts.querygen_system_for(n)),
        Message::new(Role::User, prompts.querygen_user_for(query)),
    ])
}

/// Rewrites `query` into at most `n` sub-queries via the backend.
pub fn generate_subqueries(
    query: &str,
    n: usize,
    backend: &dyn GenerationBackend,
    prompts: &PromptSet,
    params: &GenerationParams,
) -> Result<Vec<SubQuery>, GenerationError> {
    if n == 0 {
        return Err(GenerationError::InvalidParams("sub-query limit must be at least 1".into()));
    }
    let messages = build_subquery_messages(query, n, prompts);
    let completion = backend.complete(&messages, params)?;
    parse_subqueries(&completion.text, n)
}

/// System, developer, prior turns, user query, assistant acknowledgement,
/// user context wrapper.
pub fn build_chat_messages(
    query: &str,
    context: &ContextBundle,
    history: &[Turn],
    prompts: &PromptSet,
) -> MessageSequence {
    let mut msgs = vec![
        Message::new(Role::System, prompts.chat_system.clone()),
        Message::new(Role::Developer, prompts.developer.clone()),
    ];
    for turn in history {
        msgs.push(Message::new(Role::User, turn.question.clone()));
        msgs.push(Message::new(Role::Assistant, turn.answer.clone()));
    }
    msgs.push(Message::new(Role::User, query));
    msgs.push(Message::new(Role::Assistant, prompts.assistant_ack.clone()));
    msgs.push(Message::new(Role::User, prompts.context_message(&context.context_text)));
    MessageSequence(msgs)
}

fn citation_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\d+)\]").expect("valid regex"))
}

/// Sorted, distinct `[n]` markers in `text`.
pub fn extract_citations(text: &str) -> Vec<usize> {
    citation_regex()
        .captures_iter(text)
        .filter_map(|c| c[1].parse::<usize>().ok())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub answer: String,
    pub reasoning_trace: Option<String>,
    pub citations: Vec<usize>,
}

/// One completion. Citations come from the answer text only; the reasoning
/// trace is carried alongside and never parsed.
pub fn generate_answer(
    messages: &MessageSequence,
    params: &GenerationParams,
    backend: &dyn GenerationBackend,
    on_delta: Option<&mut dyn FnMut(&str)>,
) -> Result<GeneratedAnswer, GenerationError> {
    params.validate()?;
    let completion = match on_delta {
        Some(cb) => backend.complete_streaming(messages, params, cb)?,
        None => backend.complete(messages, params)?,
    };
    Ok(GeneratedAnswer {
        citations: extract_citations(&completion.text),
        answer: completion.text,
        reasoning_trace: completion.reasoning_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::mock::ScriptedBackend;
    use super::*;
    use crate::context::{assemble_context, NO_CONTEXT};

    fn empty_bundle() -> ContextBundle {
        assemble_context(&[], 12_000)
    }

    #[test]
    fn default_params() {
        let p = GenerationParams::default();
        assert_eq!(p.max_tokens, 56_000);
        assert_eq!(p.temperature, 0.2);
        assert_eq!(p.top_p, 0.9);
        assert_eq!(p.presence_penalty, 0.0);
        assert_eq!(p.frequency_penalty, 0.0);
        assert_eq!(p.completions_per_query, 1);
        p.validate().unwrap();
        let bad = GenerationParams { top_p: 0.0, ..p.clone() };
        assert!(bad.validate().is_err());
        let bad = GenerationParams { temperature: -0.1, ..p };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn chat_sequence_order() {
        let prompts = PromptSet::default();
        let seq = build_chat_messages("What is GRC?", &empty_bundle(), &[], &prompts);
        assert_eq!(
            seq.roles(),
            vec![Role::System, Role::Developer, Role::User, Role::Assistant, Role::User]
        );
        assert_eq!(seq.0[2].content, "What is GRC?");
        assert!(seq.0[4].content.contains(NO_CONTEXT));
        assert_eq!(seq, build_chat_messages("What is GRC?", &empty_bundle(), &[], &prompts));
    }

    #[test]
    fn history_precedes_query() {
        let prompts = PromptSet::default();
        let history = vec![
            Turn { question: "q1".into(), answer: "a1".into() },
            Turn { question: "q2".into(), answer: "a2".into() },
        ];
        let seq = build_chat_messages("q3", &empty_bundle(), &history, &prompts);
        assert_eq!(seq.0.len(), 9);
        let contents: Vec<&str> = seq.0[2..7].iter().map(|m| m.content.as_str()).collect();
        assert_eq!(contents, vec!["q1", "a1", "q2", "a2", "q3"]);
        assert_eq!(seq.0[7].role, Role::Assistant);
    }

    #[test]
    fn citations() {
        assert_eq!(extract_citations("See [3] and [1], again [3]. [x] [12]"), vec![1, 3, 12]);
        assert!(extract_citations("none here").is_empty());
    }

    #[test]
    fn subquery_parsing() {
        let one = r#"{"queries":[{"query":"what is a PDRA","reasoning_level":"low"}]}"#;
        assert_eq!(parse_subqueries(one, 3).unwrap().len(), 1);

        let bad_level = r#"{"queries":[{"query":"q","reasoning_level":"extreme"}]}"#;
        assert_eq!(
            parse_subqueries(bad_level, 3),
            Err(GenerationError::InvalidReasoningLevel("extreme".into()))
        );

        let prose = format!("Here you go: {one}");
        assert!(matches!(parse_subqueries(&prose, 3), Err(GenerationError::MalformedBackendJson(_))));

        let many = r#"{"queries":[
            {"query":"a","reasoning_level":"none"},
            {"query":"b","reasoning_level":"low"},
            {"query":"c","reasoning_level":"medium"},
            {"query":"d","reasoning_level":"high"}]}"#;
        let qs = parse_subqueries(many, 3).unwrap();
        assert_eq!(qs.iter().map(|q| q.query.as_str()).collect::<Vec<_>>(), vec!["a", "b", "c"]);
    }

    #[test]
    fn generate_subqueries_sends_expected_prompts() {
        let backend = ScriptedBackend::new(
            "script",
            vec![Ok(Completion::text(r#"{"queries":[{"query":"x","reasoning_level":"none"}]}"#))],
        );
        let prompts = PromptSet::default();
        let qs = generate_subqueries("orig", 2, &backend, &prompts, &GenerationParams::default()).unwrap();
        assert_eq!(qs, vec![SubQuery { query: "x".into(), reasoning_level: ReasoningLevel::None }]);
        let sent = backend.calls();
        assert!(sent[0].0[0].content.contains("at most 2 queries"));
        assert!(sent[0].0[1].content.contains("\"\"\"orig\"\"\""));
    }

    #[test]
    fn answer_keeps_trace_separate() {
        let sentinel = "TRACE-SENTINEL [7]";
        let backend = ScriptedBackend::new(
            "script",
            vec![Ok(Completion {
                text: "Facts: the buffer applies [2].".into(),
                reasoning_trace: Some(sentinel.into()),
            })],
        );
        let msgs = build_chat_messages("q", &empty_bundle(), &[], &PromptSet::default());
        let out = generate_answer(&msgs, &GenerationParams::default(), &backend, None).unwrap();
        assert_eq!(out.citations, vec![2]);
        assert!(!out.answer.contains("TRACE-SENTINEL"));
        assert_eq!(out.reasoning_trace.as_deref(), Some(sentinel));
    }

    #[test]
    fn registry_lookup() {
        let mut reg = BackendRegistry::new();
        reg.register(Arc::new(ScriptedBackend::new("s", vec![])));
        assert!(reg.get("s").is_ok());
        assert!(matches!(reg.get("nope"), Err(GenerationError::UnknownBackend(_))));
    }
}
