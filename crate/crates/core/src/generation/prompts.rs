use std::path::{Path, PathBuf};

use super::GenerationError;

/// Prompt texts used to build every message sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub chat_system: String,
    pub developer: String,
    pub indicator_system: String,
    pub querygen_system: String,
    pub querygen_user: String,
    pub assistant_ack: String,
    pub context_wrapper: String,
    pub indicator_request: String,
}

pub const PROMPT_FILES: [&str; 8] = [
    "chat_system.txt",
    "developer.txt",
    "indicator_system.txt",
    "querygen_system.txt",
    "querygen_user.txt",
    "assistant_ack.txt",
    "context_wrapper.txt",
    "indicator_request.txt",
];

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            chat_system: include_str!("../../prompts/chat_system.txt").into(),
            developer: include_str!("../../prompts/developer.txt").into(),
            indicator_system: include_str!("../../prompts/indicator_system.txt").into(),
            querygen_system: include_str!("../../prompts/querygen_system.txt").into(),
            querygen_user: include_str!("../../prompts/querygen_user.txt").into(),
            assistant_ack: include_str!("../../prompts/assistant_ack.txt").into(),
            context_wrapper: include_str!("../../prompts/context_wrapper.txt").into(),
            indicator_request: include_str!("../../prompts/indicator_request.txt").into(),
        }
    }
}

impl PromptSet {
    /// Loads all prompt files from `dir`. Every file must be present.
    pub fn load_dir(dir: &Path) -> Result<Self, GenerationError> {
        let read = |name: &str| -> Result<String, GenerationError> {
            let path: PathBuf = dir.join(name);
            std::fs::read_to_string(&path).map_err(|_| GenerationError::MissingPromptFile(path))
        };
        Ok(Self {
            chat_system: read(PROMPT_FILES[0])?,
            developer: read(PROMPT_FILES[1])?,
            indicator_system: read(PROMPT_FILES[2])?,
            querygen_system: read(PROMPT_FILES[3])?,
            querygen_user: read(PROMPT_FILES[4])?,
            assistant_ack: read(PROMPT_FILES[5])?,
            context_wrapper: read(PROMPT_FILES[6])?,
            indicator_request: read(PROMPT_FILES[7])?,
        })
    }

    /// Query generation system prompt with the sub-query cap filled in.
    pub fn querygen_system_for(&self, n: usize) -> String {
        self.querygen_system
            .replace("at most N queries", &format!("at most {n} queries"))
    }

    pub fn querygen_user_for(&self, query: &str) -> String {
        self.querygen_user.replace("<USER_QUERY>", query)
    }

    pub fn context_message(&self, context_text: &str) -> String {
        self.context_wrapper.replace("{context}", context_text)
    }
}
