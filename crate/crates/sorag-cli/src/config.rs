//! Configuration layering and provider construction.
//!
//! Every value is resolved with the same precedence: command-line flag,
//! then `SORAG_*` environment variable, then the TOML config file, then
//! a built-in default. `--mock` short-circuits provider construction
//! entirely and swaps in the deterministic offline implementations.

use std::env;
use std::path::PathBuf;

use serde::Deserialize;
use sorag::embed::{EmbedProvider, EmbeddingProviderConfig, HashEmbedder, HttpEmbedder};
use sorag::llm::{ChatProvider, ChatProviderConfig, HttpChat, SyntheticChat, TemplateSet};
use sorag::util::RetryPolicy;

use crate::{CliError, ProviderFlags};

/// Embedding width used by the mock embedder when nothing else sets one.
pub const DEFAULT_MOCK_DIM: usize = 64;

/// Seed offsets so the chat, judge, and embedding mocks never share a
/// stream even when only one base seed is given.
const JUDGE_SEED_OFFSET: u64 = 1;
const EMBED_SEED_OFFSET: u64 = 2;

/// The optional TOML config file. Sections mirror the provider wire
/// configs, so a file can carry endpoints, credentials, and timeouts.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    /// Directory of prompt template overrides.
    pub templates: Option<PathBuf>,
    pub chat: Option<ChatProviderConfig>,
    /// Judge model; falls back to `chat` when absent.
    pub judge: Option<ChatProviderConfig>,
    pub embedding: Option<EmbeddingProviderConfig>,
}

impl FileConfig {
    pub fn load(path: &PathBuf) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
    }
}

/// Values picked up from `SORAG_*` environment variables.
#[derive(Debug, Default)]
pub struct EnvOverrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub templates: Option<PathBuf>,
    pub chat_endpoint: Option<String>,
    pub chat_model: Option<String>,
    pub chat_api_key: Option<String>,
    pub judge_endpoint: Option<String>,
    pub judge_model: Option<String>,
    pub judge_api_key: Option<String>,
    pub embed_endpoint: Option<String>,
    pub embed_model: Option<String>,
    pub embed_dim: Option<usize>,
}

fn env_string(name: &str) -> Option<String> {
    env::var(name).ok().filter(|v| !v.is_empty())
}

fn env_parsed<T: std::str::FromStr>(name: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match env_string(name) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|e| CliError::usage(format!("{name}={raw:?}: {e}"))),
    }
}

impl EnvOverrides {
    pub fn from_env() -> Result<Self, CliError> {
        Ok(EnvOverrides {
            config: env_string("SORAG_CONFIG").map(PathBuf::from),
            seed: env_parsed("SORAG_SEED")?,
            dim: env_parsed("SORAG_DIM")?,
            templates: env_string("SORAG_TEMPLATES").map(PathBuf::from),
            chat_endpoint: env_string("SORAG_CHAT_ENDPOINT"),
            chat_model: env_string("SORAG_CHAT_MODEL"),
            chat_api_key: env_string("SORAG_CHAT_API_KEY"),
            judge_endpoint: env_string("SORAG_JUDGE_ENDPOINT"),
            judge_model: env_string("SORAG_JUDGE_MODEL"),
            judge_api_key: env_string("SORAG_JUDGE_API_KEY"),
            embed_endpoint: env_string("SORAG_EMBED_ENDPOINT"),
            embed_model: env_string("SORAG_EMBED_MODEL"),
            embed_dim: env_parsed("SORAG_EMBED_DIM")?,
        })
    }
}

/// Fully resolved configuration for one command invocation.
#[derive(Debug)]
pub struct Settings {
    pub mock: bool,
    pub seed: u64,
    pub dim: usize,
    pub templates: TemplateSet,
    pub chat: Option<ChatProviderConfig>,
    pub judge: Option<ChatProviderConfig>,
    pub embedding: Option<EmbeddingProviderConfig>,
}

/// Merges an optional file section with endpoint/model/key overrides.
/// Overrides patch an existing section field by field; without a file
/// section they must supply at least endpoint and model to count.
fn merge_chat(
    label: &str,
    file: Option<ChatProviderConfig>,
    endpoint: Option<String>,
    model: Option<String>,
    api_key: Option<String>,
) -> Result<Option<ChatProviderConfig>, CliError> {
    match file {
        Some(mut cfg) => {
            if let Some(e) = endpoint {
                cfg.endpoint = e;
            }
            if let Some(m) = model {
                cfg.model_id = m;
            }
            if api_key.is_some() {
                cfg.api_key = api_key;
            }
            Ok(Some(cfg))
        }
        None => match (endpoint, model) {
            (None, None) => Ok(None),
            (Some(e), Some(m)) => Ok(Some(ChatProviderConfig {
                endpoint: e,
                model_id: m,
                api_key,
                timeout_secs: 60,
            })),
            _ => Err(CliError::provider(format!(
                "partial {label} provider from the environment: both \
                 endpoint and model are required"
            ))),
        },
    }
}

fn merge_embedding(
    file: Option<EmbeddingProviderConfig>,
    endpoint: Option<String>,
    model: Option<String>,
    dim: Option<usize>,
) -> Result<Option<EmbeddingProviderConfig>, CliError> {
    match file {
        Some(mut cfg) => {
            if let Some(e) = endpoint {
                cfg.endpoint = e;
            }
            if let Some(m) = model {
                cfg.model_id = m;
            }
            if let Some(d) = dim {
                cfg.dim = d;
            }
            Ok(Some(cfg))
        }
        None => match (endpoint, model, dim) {
            (None, None, None) => Ok(None),
            (Some(e), Some(m), Some(d)) => Ok(Some(EmbeddingProviderConfig {
                endpoint: e,
                model_id: m,
                dim: d,
                timeout_secs: 30,
                max_batch: 64,
            })),
            _ => Err(CliError::provider(
                "partial embedding provider from the environment: \
                 endpoint, model, and dim are all required",
            )),
        },
    }
}

/// Resolves flags, environment, and file into one [`Settings`].
/// `dim_fallback` lets commands that already know a width (a loaded
/// index) win over the built-in default without beating explicit flags.
pub fn resolve_settings(
    flags: &ProviderFlags,
    env: EnvOverrides,
    file: FileConfig,
    dim_fallback: Option<usize>,
) -> Result<Settings, CliError> {
    let seed = flags.seed.or(env.seed).or(file.seed).unwrap_or(0);
    let dim = flags
        .dim
        .or(env.dim)
        .or(file.dim)
        .or(dim_fallback)
        .unwrap_or(DEFAULT_MOCK_DIM);
    if dim == 0 {
        return Err(CliError::usage("--dim must be at least 1"));
    }

    let templates = match flags.templates.clone().or(env.templates).or(file.templates) {
        Some(dir) => TemplateSet::load_dir(&dir)
            .map_err(|e| CliError::input(format!("templates {}: {e}", dir.display())))?,
        None => TemplateSet::builtin(),
    };

    let chat = merge_chat(
        "chat",
        file.chat,
        env.chat_endpoint,
        env.chat_model,
        env.chat_api_key,
    )?;
    // The judge patches fall back to the resolved chat config so a
    // single hosted model can both answer and score.
    let judge = merge_chat(
        "judge",
        file.judge.or_else(|| chat.clone()),
        env.judge_endpoint,
        env.judge_model,
        env.judge_api_key,
    )?;
    let embedding = merge_embedding(file.embedding, env.embed_endpoint, env.embed_model, env.embed_dim)?;

    Ok(Settings {
        mock: flags.mock,
        seed,
        dim,
        templates,
        chat,
        judge,
        embedding,
    })
}

/// Loads environment and file config and resolves them against `flags`.
pub fn load_settings(flags: &ProviderFlags, dim_fallback: Option<usize>) -> Result<Settings, CliError> {
    let env = EnvOverrides::from_env()?;
    let file = match flags.config.clone().or_else(|| env.config.clone()) {
        Some(path) => FileConfig::load(&path)?,
        None => FileConfig::default(),
    };
    resolve_settings(flags, env, file, dim_fallback)
}

impl Settings {
    pub fn retry(&self) -> RetryPolicy {
        if self.mock {
            RetryPolicy::immediate(1)
        } else {
            RetryPolicy::default()
        }
    }

    /// The answer-generation model: a seeded synthetic mock, or the
    /// configured HTTP endpoint.
    pub fn build_chat(&self) -> Result<Box<dyn ChatProvider>, CliError> {
        self.build_chat_seeded(self.seed)
    }

    pub fn build_chat_seeded(&self, seed: u64) -> Result<Box<dyn ChatProvider>, CliError> {
        if self.mock {
            return Ok(Box::new(SyntheticChat::new("mock-chat", seed)));
        }
        let cfg = self.chat.clone().ok_or_else(|| {
            CliError::provider(
                "no chat model configured: pass --mock, add [chat] to the \
                 config file, or export SORAG_CHAT_ENDPOINT and SORAG_CHAT_MODEL",
            )
        })?;
        let http = HttpChat::new(cfg).map_err(|e| CliError::provider(e.to_string()))?;
        Ok(Box::new(http))
    }

    pub fn build_judge(&self) -> Result<Box<dyn ChatProvider>, CliError> {
        self.build_judge_seeded(self.judge_seed())
    }

    pub fn build_judge_seeded(&self, seed: u64) -> Result<Box<dyn ChatProvider>, CliError> {
        if self.mock {
            return Ok(Box::new(SyntheticChat::new("mock-judge", seed)));
        }
        let cfg = self.judge.clone().ok_or_else(|| {
            CliError::provider(
                "no judge model configured: pass --mock, add [judge] or [chat] \
                 to the config file, or export SORAG_JUDGE_ENDPOINT and SORAG_JUDGE_MODEL",
            )
        })?;
        let http = HttpChat::new(cfg).map_err(|e| CliError::provider(e.to_string()))?;
        Ok(Box::new(http))
    }

    /// Chat provider for one experiment arm. In mock mode the arm is a
    /// synthetic model named and seeded per arm; in HTTP mode the shared
    /// endpoint is reused with the arm name as the hosted model id.
    pub fn build_arm(&self, model: &str, seed: u64) -> Result<Box<dyn ChatProvider>, CliError> {
        if self.mock {
            return Ok(Box::new(SyntheticChat::new(model, seed)));
        }
        let mut cfg = self.chat.clone().ok_or_else(|| {
            CliError::provider(
                "no chat model configured for experiment arms: pass --mock or \
                 configure the chat provider",
            )
        })?;
        cfg.model_id = model.to_string();
        let http = HttpChat::new(cfg).map_err(|e| CliError::provider(e.to_string()))?;
        Ok(Box::new(http))
    }

    pub fn build_embedder(&self) -> Result<Box<dyn EmbedProvider>, CliError> {
        self.build_embedder_seeded(self.seed.wrapping_add(EMBED_SEED_OFFSET))
    }

    pub fn build_embedder_seeded(&self, seed: u64) -> Result<Box<dyn EmbedProvider>, CliError> {
        if self.mock {
            return Ok(Box::new(HashEmbedder::new(self.dim, seed)));
        }
        let cfg = self.embedding.clone().ok_or_else(|| {
            CliError::provider(
                "no embedding model configured: pass --mock, add [embedding] to the \
                 config file, or export SORAG_EMBED_ENDPOINT, SORAG_EMBED_MODEL, \
                 and SORAG_EMBED_DIM",
            )
        })?;
        let http = HttpEmbedder::new(cfg).map_err(|e| CliError::provider(e.to_string()))?;
        Ok(Box::new(http))
    }

    /// Judge seed with the default offset, for spec-level overrides.
    pub fn judge_seed(&self) -> u64 {
        self.seed.wrapping_add(JUDGE_SEED_OFFSET)
    }

    pub fn embed_seed(&self) -> u64 {
        self.seed.wrapping_add(EMBED_SEED_OFFSET)
    }
}
