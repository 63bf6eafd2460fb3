//! Client for OpenAI-compatible `/chat/completions` endpoints.

use std::io::{BufRead, BufReader};
use std::time::Duration;

use serde_json::{json, Value};

use super::{Completion, GenerationBackend, GenerationError, GenerationParams, MessageSequence};

pub struct OpenAiCompatBackend {
    name: String,
    endpoint: String,
    model: String,
    api_key: String,
    timeout: Duration,
}

// The key is deliberately absent from Debug output.
impl std::fmt::Debug for OpenAiCompatBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiCompatBackend")
            .field("name", &self.name)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl OpenAiCompatBackend {
    pub fn new(name: &str, endpoint: &str, model: &str, api_key: String, timeout: Duration) -> Self {
        Self {
            name: name.to_string(),
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            timeout,
        }
    }

    /// Reads the API key from `key_var`; fails fast when unset or empty.
    pub fn from_env(
        name: &str,
        endpoint: &str,
        model: &str,
        key_var: &str,
        timeout: Duration,
    ) -> Result<Self, GenerationError> {
        match std::env::var(key_var) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(name, endpoint, model, key, timeout)),
            _ => Err(GenerationError::MissingCredentials {
                var: key_var.to_string(),
            }),
        }
    }

    pub fn request_body(&self, messages: &MessageSequence, params: &GenerationParams, stream: bool) -> Value {
        json!({
            "model": self.model,
            "messages": messages.messages(),
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "presence_penalty": params.presence_penalty,
            "frequency_penalty": params.frequency_penalty,
            "reasoning_effort": params.reasoning_effort.as_str(),
            "n": params.completions_per_query,
            "stream": stream,
        })
    }

    fn unavailable(&self, reason: impl Into<String>) -> GenerationError {
        GenerationError::BackendUnavailable {
            backend: self.name.clone(),
            reason: reason.into(),
        }
    }

    fn map_err(&self, e: reqwest::Error) -> GenerationError {
        if e.is_timeout() {
            GenerationError::Timeout {
                backend: self.name.clone(),
                secs: self.timeout.as_secs(),
            }
        } else {
            // without_url keeps query strings out of messages
            self.unavailable(e.without_url().to_string())
        }
    }

    fn send(&self, body: &Value) -> Result<reqwest::blocking::Response, GenerationError> {
        // Built per call: a blocking client must not be created or dropped
        // on an async runtime thread, and callers decide where this runs.
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| self.map_err(e))?;
        let resp = client
            .post(format!("{}/chat/completions", self.endpoint))
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| self.map_err(e))?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(self.unavailable(format!("endpoint rejected the credentials ({status})")));
        }
        if !status.is_success() {
            return Err(self.unavailable(format!("endpoint returned {status}")));
        }
        Ok(resp)
    }
}

fn reasoning_of(message: &Value) -> Option<String> {
    ["reasoning_content", "reasoning"]
        .iter()
        .find_map(|k| message.get(*k).and_then(Value::as_str))
        .map(str::to_string)
}

pub fn parse_completion_response(body: &Value) -> Option<Completion> {
    let message = body.get("choices")?.get(0)?.get("message")?;
    Some(Completion {
        text: message.get("content")?.as_str()?.to_string(),
        reasoning_trace: reasoning_of(message),
    })
}

impl GenerationBackend for OpenAiCompatBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &MessageSequence, params: &GenerationParams) -> Result<Completion, GenerationError> {
        let resp = self.send(&self.request_body(messages, params, false))?;
        let body: Value = resp.json().map_err(|e| self.map_err(e))?;
        parse_completion_response(&body).ok_or_else(|| self.unavailable("response has no choices[0].message.content"))
    }

    fn complete_streaming(
        &self,
        messages: &MessageSequence,
        params: &GenerationParams,
        on_delta: &mut dyn FnMut(&str),
    ) -> Result<Completion, GenerationError> {
        let resp = self.send(&self.request_body(messages, params, true))?;
        let mut text = String::new();
        let mut trace = String::new();
        for line in BufReader::new(resp).lines() {
            let line = line.map_err(|e| self.unavailable(format!("stream interrupted: {e}")))?;
            let Some(data) = line.strip_prefix("data:").map(str::trim) else {
                continue;
            };
            if data == "[DONE]" {
                break;
            }
            let Ok(event) = serde_json::from_str::<Value>(data) else {
                continue;
            };
            let Some(delta) = event.pointer("/choices/0/delta") else {
                continue;
            };
            if let Some(piece) = delta.get("content").and_then(Value::as_str) {
                text.push_str(piece);
                on_delta(piece);
            }
            if let Some(r) = reasoning_of(delta) {
                trace.push_str(&r);
            }
        }
        Ok(Completion {
            text,
            reasoning_trace: (!trace.is_empty()).then_some(trace),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{Message, Role};

    #[test]
    fn missing_key_fails_fast() {
        let var = "REGRAG_TEST_UNSET_KEY_VAR";
        std::env::remove_var(var);
        let err = OpenAiCompatBackend::from_env("x", "http://127.0.0.1:9", "m", var, Duration::from_secs(1))
            .unwrap_err();
        assert_eq!(err, GenerationError::MissingCredentials { var: var.into() });
        assert!(err.to_string().contains(var));
    }

    #[test]
    fn debug_hides_key() {
        let b = OpenAiCompatBackend::new("x", "http://h/v1/", "m", "sk-SENTINEL".into(), Duration::from_secs(1));
        assert!(!format!("{b:?}").contains("SENTINEL"));
        assert_eq!(b.endpoint, "http://h/v1");
    }

    #[test]
    fn body_carries_params() {
        let b = OpenAiCompatBackend::new("x", "http://h", "m", "k".into(), Duration::from_secs(1));
        let seq = MessageSequence(vec![Message::new(Role::Developer, "d")]);
        let body = b.request_body(&seq, &GenerationParams::default(), false);
        assert_eq!(body["temperature"], 0.2);
        assert_eq!(body["top_p"], 0.9);
        assert_eq!(body["max_tokens"], 56_000);
        assert_eq!(body["reasoning_effort"], "medium");
        assert_eq!(body["messages"][0]["role"], "developer");
        assert!(!body.to_string().contains("\"k\""));
    }

    #[test]
    fn parses_response_with_trace() {
        let body = json!({"choices":[{"message":{"content":"ans [1]","reasoning_content":"think"}}]});
        let c = parse_completion_response(&body).unwrap();
        assert_eq!(c.text, "ans [1]");
        assert_eq!(c.reasoning_trace.as_deref(), Some("think"));
        assert!(parse_completion_response(&json!({})).is_none());
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let b = OpenAiCompatBackend::new("x", "http://127.0.0.1:9", "m", "k".into(), Duration::from_secs(2));
        let err = b
            .complete(&MessageSequence::default(), &GenerationParams::default())
            .unwrap_err();
        assert!(matches!(
            err,
            GenerationError::BackendUnavailable { .. } | GenerationError::Timeout { .. }
        ));
    }
}
