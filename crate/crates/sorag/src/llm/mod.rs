//! Chat-completion provider contract, prompt templates, and the three
//! prompt roles built on them: pseudo-answer generation for retrieval,
//! final answer generation (zero-shot or with retrieved context), and
//! answer judging on a 1 to 10 scale.
//!
//! Providers are pluggable: [`HttpChat`] speaks a chat-completions JSON
//! wire format, while [`ScriptedChat`], [`EchoChat`] and
//! [`SyntheticChat`] replace the network for tests and offline runs.

mod http;
mod mock;
mod ops;
mod template;

pub use http::{ChatProviderConfig, HttpChat};
pub use mock::{EchoChat, ScriptedChat, SyntheticChat};
pub use ops::{
    generate_answer, generate_hyde, judge, parse_score, ChatOptions, JudgeScore,
    JUDGE_SEED, JUDGE_TEMPERATURE,
};
pub use template::{PromptRole, PromptTemplate, TemplateSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{retry, RetryPolicy};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{role} template is missing required placeholder {placeholder}")]
    MissingPlaceholder {
        role: &'static str,
        placeholder: &'static str,
    },
    #[error("{0} must be non-empty")]
    EmptyInput(&'static str),
    #[error("provider returned an empty reply")]
    EmptyReply,
    #[error("no integer between 1 and 10 in reply {reply:?}")]
    UnparseableScore { reply: String },
    #[error("provider error: {message}")]
    Provider { transient: bool, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl LlmError {
    /// Whether retrying the same call might succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, LlmError::Provider { transient: true, .. })
    }
}

/// One chat-completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model_id.is_empty() {
            return Err(LlmError::Config("model_id is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::Config(format!(
                "temperature must be a finite number >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be > 0".into()));
        }
        Ok(())
    }
}

/// Token counts as reported by a provider, when it reports them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Provider reply: the text plus optional usage accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatReply {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

impl ChatReply {
    pub fn text(text: impl Into<String>) -> Self {
        ChatReply {
            text: text.into(),
            usage: None,
        }
    }
}

/// A chat-completion backend. Mock providers that replay a fixed script
/// are not `Sync` and therefore opt out of concurrent use at the type
/// level; stateless providers implement `Sync` and may be shared.
pub trait ChatProvider: Send {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, LlmError>;
    fn model_id(&self) -> &str;
}

/// Sends one request, retrying transient provider failures with capped
/// exponential backoff, and returns the reply text.
pub fn complete(
    request: &ChatRequest,
    provider: &dyn ChatProvider,
    retry_policy: &RetryPolicy,
) -> Result<String, LlmError> {
    request.validate()?;
    let reply = retry(retry_policy, LlmError::is_transient, || {
        provider.chat(request)
    })?;
    if let Some(usage) = reply.usage {
        log::debug!(
            "chat {}: {} prompt + {} completion tokens",
            request.model_id,
            usage.prompt_tokens,
            usage.completion_tokens
        );
    }
    Ok(reply.text)
}

/// Runs many requests with at most `in_flight` concurrent calls against
/// a shareable provider, preserving input order. Failures are per
/// request, not global.
pub fn complete_many(
    requests: &[ChatRequest],
    provider: &(dyn ChatProvider + Sync),
    retry_policy: &RetryPolicy,
    in_flight: usize,
) -> Vec<Result<String, LlmError>> {
    let in_flight = in_flight.max(1).min(requests.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<String, LlmError>>>> =
        requests.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..in_flight {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= requests.len() {
                    break;
                }
                let outcome = complete(&requests[idx], provider, retry_policy);
                *slots[idx].lock().expect("result slot poisoned") = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("every request index was visited")
        })
        .collect()
}
