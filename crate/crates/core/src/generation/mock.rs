//! Offline backends for tests and dry runs.

use std::collections::VecDeque;
use std::sync::{Mutex, OnceLock};

use regex::Regex;

use super::{Completion, GenerationBackend, GenerationError, GenerationParams, MessageSequence, Role, REFUSAL};
use crate::context::NO_CONTEXT;

type Step = Result<Completion, GenerationError>;

/// Splits text into whitespace-terminated pieces that concatenate back to it.
pub fn word_deltas(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev_ws = false;
    for (i, ch) in text.char_indices() {
        if prev_ws && !ch.is_whitespace() {
            out.push(&text[start..i]);
            start = i;
        }
        prev_ws = ch.is_whitespace();
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

fn stream_words(c: Step, on_delta: &mut dyn FnMut(&str)) -> Step {
    let c = c?;
    for piece in word_deltas(&c.text) {
        on_delta(piece);
    }
    Ok(c)
}

/// Replays a fixed queue of completions and records every request.
pub struct ScriptedBackend {
    name: String,
    script: Mutex<VecDeque<Step>>,
    calls: Mutex<Vec<MessageSequence>>,
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedBackend")
            .field("name", &self.name)
            .field("remaining", &self.remaining())
            .finish()
    }
}

impl ScriptedBackend {
    pub fn new(name: &str, script: Vec<Step>) -> Self {
        Self {
            name: name.to_string(),
            script: Mutex::new(script.into()),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn from_texts<S: AsRef<str>>(name: &str, texts: &[S]) -> Self {
        Self::new(
            name,
            texts.iter().map(|t| Ok(Completion::text(t.as_ref()))).collect(),
        )
    }

    pub fn calls(&self) -> Vec<MessageSequence> {
        self.calls.lock().expect("calls lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("script lock").len()
    }

    fn next(&self, messages: &MessageSequence) -> Step {
        self.calls.lock().expect("calls lock").push(messages.clone());
        self.script
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or_else(|| {
                Err(GenerationError::BackendUnavailable {
                    backend: self.name.clone(),
                    reason: "script exhausted".into(),
                })
            })
    }
}

impl GenerationBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &MessageSequence, _params: &GenerationParams) -> Step {
        self.next(messages)
    }

    fn complete_streaming(
        &self,
        messages: &MessageSequence,
        _params: &GenerationParams,
        on_delta: &mut dyn FnMut(&str),
    ) -> Step {
        stream_words(self.next(messages), on_delta)
    }
}

type Responder = dyn Fn(&MessageSequence, &GenerationParams) -> Step + Send + Sync;

/// Backend driven by a closure.
pub struct FnBackend {
    name: String,
    f: Box<Responder>,
}

impl FnBackend {
    pub fn new(
        name: &str,
        f: impl Fn(&MessageSequence, &GenerationParams) -> Step + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.to_string(),
            f: Box::new(f),
        }
    }
}

impl GenerationBackend for FnBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &MessageSequence, params: &GenerationParams) -> Step {
        (self.f)(messages, params)
    }
}

/// A deterministic stand-in that follows the prompt contract: refuses on an
/// empty context, otherwise answers from the context blocks and cites them.
#[derive(Debug, Clone)]
pub struct ContractMock {
    name: String,
    max_blocks: usize,
}

impl Default for ContractMock {
    fn default() -> Self {
        Self::new("mock")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBlock {
    pub index: usize,
    pub title: String,
    pub page: u32,
    pub text: String,
}

fn block_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\[(\d+)\] (.*?), page (\d+) > (.*)$").expect("valid regex"))
}

/// Parses the rendered context blocks back out of a context message.
pub fn parse_context_blocks(context: &str) -> Vec<ContextBlock> {
    context
        .lines()
        .filter_map(|line| {
            let c = block_regex().captures(line)?;
            Some(ContextBlock {
                index: c[1].parse().ok()?,
                title: c[2].to_string(),
                page: c[3].parse().ok()?,
                text: c[4].to_string(),
            })
        })
        .collect()
}

fn first_sentence(text: &str) -> &str {
    let t = text.trim();
    let end = t
        .char_indices()
        .find(|&(i, ch)| {
            matches!(ch, '.' | '?' | '!')
                && t[i + ch.len_utf8()..].starts_with(char::is_whitespace)
        })
        .map_or(t.len(), |(i, _)| i);
    t[..end].trim_end_matches(['.', '?', '!'])
}

impl ContractMock {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            max_blocks: 3,
        }
    }

    fn context_of(messages: &MessageSequence) -> Option<&str> {
        messages
            .messages()
            .iter()
            .rev()
            .find(|m| m.role == Role::User && m.content.starts_with("Context:"))
            .map(|m| m.content.as_str())
    }

    fn respond(&self, messages: &MessageSequence) -> Completion {
        let msgs = messages.messages();
        if msgs
            .first()
            .is_some_and(|m| m.content.starts_with("You generate queries"))
        {
            return self.subqueries(messages);
        }
        let context = Self::context_of(messages).unwrap_or(NO_CONTEXT);
        if context.contains(NO_CONTEXT) {
            return Completion::text(REFUSAL);
        }
        let blocks = parse_context_blocks(context);
        if let Some(request) = msgs
            .iter()
            .find(|m| m.role == Role::User && m.content.contains("Requested indicator: "))
        {
            return self.indicator(&request.content, &blocks);
        }
        let mut answer = String::from("Facts\n");
        for b in blocks.iter().take(self.max_blocks) {
            answer.push_str(&format!("{} [{}].\n", first_sentence(&b.text), b.index));
        }
        Completion {
            text: answer.trim_end().to_string(),
            reasoning_trace: Some(format!("selected {} context blocks", blocks.len().min(self.max_blocks))),
        }
    }

    fn subqueries(&self, messages: &MessageSequence) -> Completion {
        let user = messages
            .messages()
            .iter()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str());
        let query = user
            .split("\"\"\"")
            .nth(1)
            .unwrap_or(user)
            .to_string();
        Completion::text(
            serde_json::json!({"queries": [{"query": query, "reasoning_level": "low"}]}).to_string(),
        )
    }

    fn indicator(&self, request: &str, blocks: &[ContextBlock]) -> Completion {
        let name = request
            .lines()
            .find_map(|l| l.strip_prefix("Requested indicator: "))
            .unwrap_or("")
            .trim();
        let value = request
            .lines()
            .find_map(|l| l.strip_prefix("Allowed values: "))
            .and_then(|vals| vals.split(", ").next())
            .unwrap_or("")
            .trim();
        let cited: Vec<String> = blocks
            .iter()
            .take(self.max_blocks)
            .map(|b| format!("[{}] {}", b.index, b.title))
            .collect();
        let explanation = format!("Indicative only. Based on {}.", cited.join("; "));
        Completion::text(
            serde_json::json!({"name": name, "value": value, "explanation": explanation}).to_string(),
        )
    }
}

impl GenerationBackend for ContractMock {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &MessageSequence, _params: &GenerationParams) -> Step {
        Ok(self.respond(messages))
    }

    fn complete_streaming(
        &self,
        messages: &MessageSequence,
        _params: &GenerationParams,
        on_delta: &mut dyn FnMut(&str),
    ) -> Step {
        stream_words(Ok(self.respond(messages)), on_delta)
    }
}
