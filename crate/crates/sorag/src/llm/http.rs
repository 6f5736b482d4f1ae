//! HTTP chat provider speaking a chat-completions style JSON protocol:
//! POST `{model, messages, temperature, max_tokens, seed}` and read
//! `{choices: [{message: {content}}], usage?}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatReply, ChatRequest, LlmError, TokenUsage};

fn default_timeout_secs() -> u64 {
    60
}

/// Connection settings for a hosted chat model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatProviderConfig {
    /// Full URL of the completions endpoint.
    pub endpoint: String,
    pub model_id: String,
    /// Sent as a bearer token when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl ChatProviderConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.endpoint.is_empty() {
            return Err(LlmError::Config("chat endpoint is empty".into()));
        }
        if self.model_id.is_empty() {
            return Err(LlmError::Config("chat model_id is empty".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

/// Blocking HTTP chat client. Timeouts, connection failures, HTTP 429
/// and 5xx are transient; other failures are permanent.
pub struct HttpChat {
    config: ChatProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(config: ChatProviderConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        Ok(HttpChat { config, client })
    }
}

impl ChatProvider for HttpChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        let mut messages = Vec::with_capacity(2);
        if !request.system_prompt.is_empty() {
            messages.push(WireMessage {
                role: "system",
                content: &request.system_prompt,
            });
        }
        messages.push(WireMessage {
            role: "user",
            content: &request.user_prompt,
        });
        let body = WireRequest {
            model: &request.model_id,
            messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed,
        };

        let mut call = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|err| LlmError::Provider {
            transient: err.is_timeout() || err.is_connect(),
            message: err.to_string(),
        })?;

        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            let snippet: String = body.chars().take(200).collect();
            return Err(LlmError::Provider {
                transient: status.as_u16() == 429 || status.is_server_error(),
                message: format!("status {status}: {snippet}"),
            });
        }

        let parsed: WireResponse = response.json().map_err(|err| LlmError::Provider {
            transient: false,
            message: format!("bad response body: {err}"),
        })?;
        let choice = parsed.choices.into_iter().next().ok_or(LlmError::Provider {
            transient: false,
            message: "response carried no choices".into(),
        })?;
        Ok(ChatReply {
            text: choice.message.content,
            usage: parsed.usage,
        })
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }
}
