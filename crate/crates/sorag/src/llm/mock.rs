//! Offline chat providers for tests and mock runs.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::path::Path;

use super::{ChatProvider, ChatReply, ChatRequest, LlmError};
use crate::util::fnv1a;

/// Replays a fixed queue of replies in order and records every request
/// it sees. Single-threaded by design: the interior queue is not
/// lockable, so this type is deliberately `!Sync`.
pub struct ScriptedChat {
    model: String,
    replies: RefCell<VecDeque<String>>,
    seen: RefCell<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedChat {
            model: "scripted-mock".to_string(),
            replies: RefCell::new(replies.into_iter().map(Into::into).collect()),
            seen: RefCell::new(Vec::new()),
        }
    }

    /// Loads a JSONL script: each line is either a JSON string or an
    /// object with a `content` field.
    pub fn from_script(path: &Path) -> Result<Self, LlmError> {
        let raw = std::fs::read_to_string(path)?;
        let mut replies = Vec::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let reply = parse_script_line(line).map_err(|message| {
                LlmError::Config(format!(
                    "{}:{}: bad script line: {message}",
                    path.display(),
                    idx + 1
                ))
            })?;
            replies.push(reply);
        }
        Ok(ScriptedChat::new(replies))
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    /// Requests observed so far, in call order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.borrow().clone()
    }

    /// Replies not yet consumed.
    pub fn remaining(&self) -> usize {
        self.replies.borrow().len()
    }
}

fn parse_script_line(line: &str) -> Result<String, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    match value {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Object(map) => map
            .get("content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| "object has no string \"content\" field".to_string()),
        _ => Err("expected a JSON string or an object with \"content\"".to_string()),
    }
}

impl ChatProvider for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        self.seen.borrow_mut().push(request.clone());
        match self.replies.borrow_mut().pop_front() {
            Some(text) => Ok(ChatReply::text(text)),
            None => Err(LlmError::Provider {
                transient: false,
                message: "script exhausted: no reply left for this request".into(),
            }),
        }
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}

/// Returns every user prompt verbatim. Stateless, shareable.
pub struct EchoChat {
    model: String,
}

impl EchoChat {
    pub fn new(model: impl Into<String>) -> Self {
        EchoChat {
            model: model.into(),
        }
    }
}

impl ChatProvider for EchoChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        Ok(ChatReply::text(request.user_prompt.clone()))
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}

/// Deterministic stand-in for a hosted model: replies are a pure
/// function of (seed, prompts). Judge prompts (recognized by their
/// "Score:" instruction) get a stable pseudo-random score; everything
/// else gets a short synthetic answer that echoes the prompt tail, so
/// embeddings of mock pseudo-answers stay close to their questions.
/// Stateless and shareable.
pub struct SyntheticChat {
    model: String,
    seed: u64,
}

impl SyntheticChat {
    pub fn new(model: impl Into<String>, seed: u64) -> Self {
        SyntheticChat {
            model: model.into(),
            seed,
        }
    }
}

impl ChatProvider for SyntheticChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        let mut keyed = self.seed.to_string();
        keyed.push('|');
        keyed.push_str(&request.system_prompt);
        keyed.push('|');
        keyed.push_str(&request.user_prompt);
        let hash = fnv1a(keyed.as_bytes());
        let text = if request.user_prompt.contains("Score:") {
            format!("Score: {}", 1 + hash % 10)
        } else {
            let tail: String = request
                .user_prompt
                .chars()
                .rev()
                .take(200)
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            format!("[synthetic {:08x}] {}", hash as u32, tail.trim())
        };
        Ok(ChatReply::text(text))
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}
