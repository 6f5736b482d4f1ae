//! The three prompt operations: pseudo-answer generation, answer
//! generation, and judging, plus score parsing.

use serde::{Deserialize, Serialize};

use super::{complete, ChatProvider, ChatRequest, LlmError, TemplateSet};
use crate::util::RetryPolicy;

/// Judging runs at temperature 0 with a fixed seed so reports are
/// reproducible against deterministic providers.
pub const JUDGE_TEMPERATURE: f64 = 0.0;
pub const JUDGE_SEED: u64 = 0;

const GENERATION_SYSTEM: &str =
    "You are a helpful assistant answering software development questions.";
const JUDGE_SYSTEM: &str = "You are a strict grader of developer Q&A answers.";

/// Sampling parameters for a chat call. Defaults are deterministic:
/// temperature 0 with a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatOptions {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for ChatOptions {
    fn default() -> Self {
        ChatOptions {
            temperature: 0.0,
            max_tokens: 1024,
            seed: Some(0),
        }
    }
}

impl ChatOptions {
    /// Builds a request against `model_id` with these options.
    pub fn request(
        &self,
        model_id: impl Into<String>,
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
    ) -> ChatRequest {
        ChatRequest {
            model_id: model_id.into(),
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        }
    }
}

/// A parsed 1 to 10 judge verdict, keeping the raw reply for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub value: u8,
    pub raw_reply: String,
}

/// Extracts the first integer token in 1..=10 from a judge reply.
/// Tokens are maximal digit runs, so "10" wins over its leading "1" and
/// "19" does not yield a 1 or a 9.
pub fn parse_score(reply: &str) -> Result<u8, LlmError> {
    let bytes = reply.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if let Ok(value) = reply[start..i].parse::<u64>() {
            if (1..=10).contains(&value) {
                return Ok(value as u8);
            }
        }
    }
    Err(LlmError::UnparseableScore {
        reply: reply.to_string(),
    })
}

/// Generates a hypothetical answer to embed in place of the question.
pub fn generate_hyde(
    question: &str,
    provider: &dyn ChatProvider,
    templates: &TemplateSet,
    retry_policy: &RetryPolicy,
) -> Result<String, LlmError> {
    if question.trim().is_empty() {
        return Err(LlmError::EmptyInput("question"));
    }
    let prompt = templates.hyde.render(question, None, None)?;
    let request =
        ChatOptions::default().request(provider.model_id(), GENERATION_SYSTEM, prompt);
    non_empty(complete(&request, provider, retry_policy)?)
}

/// Generates the final answer, zero-shot when `context` is `None`.
pub fn generate_answer(
    question: &str,
    context: Option<&str>,
    provider: &dyn ChatProvider,
    templates: &TemplateSet,
    retry_policy: &RetryPolicy,
) -> Result<String, LlmError> {
    if question.trim().is_empty() {
        return Err(LlmError::EmptyInput("question"));
    }
    let prompt = match context {
        Some(context) => templates
            .answer_with_context
            .render(question, Some(context), None)?,
        None => templates.answer_zero_shot.render(question, None, None)?,
    };
    let request =
        ChatOptions::default().request(provider.model_id(), GENERATION_SYSTEM, prompt);
    non_empty(complete(&request, provider, retry_policy)?)
}

fn non_empty(text: String) -> Result<String, LlmError> {
    if text.trim().is_empty() {
        Err(LlmError::EmptyReply)
    } else {
        Ok(text)
    }
}

/// Scores `answer` against `question` on the 1 to 10 composite scale.
/// An unparseable reply is re-asked once with an explicit format
/// reminder; a second failure is an error so the case can be flagged.
pub fn judge(
    question: &str,
    answer: &str,
    provider: &dyn ChatProvider,
    templates: &TemplateSet,
    retry_policy: &RetryPolicy,
) -> Result<JudgeScore, LlmError> {
    if question.trim().is_empty() {
        return Err(LlmError::EmptyInput("question"));
    }
    if answer.trim().is_empty() {
        return Err(LlmError::EmptyInput("answer"));
    }
    let options = ChatOptions {
        temperature: JUDGE_TEMPERATURE,
        max_tokens: 256,
        seed: Some(JUDGE_SEED),
    };
    let prompt = templates.judge.render(question, None, Some(answer))?;
    let request = options.request(provider.model_id(), JUDGE_SYSTEM, prompt.clone());
    let reply = complete(&request, provider, retry_policy)?;
    if let Ok(value) = parse_score(&reply) {
        return Ok(JudgeScore {
            value,
            raw_reply: reply,
        });
    }
    let reminder = format!(
        "{prompt}\n\nYour previous reply could not be parsed. Reply with only one line: Score: N"
    );
    let retry_request = options.request(provider.model_id(), JUDGE_SYSTEM, reminder);
    let second = complete(&retry_request, provider, retry_policy)?;
    let value = parse_score(&second)?;
    Ok(JudgeScore {
        value,
        raw_reply: second,
    })
}
