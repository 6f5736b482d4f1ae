//! Embedding providers: the provider trait, an HTTP client for
//! embedding endpoints, and a deterministic offline test provider.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProviderConfig};
use crate::util::fnv1a;

/// A source of raw (not yet normalized) embedding vectors.
///
/// Implementations return one vector per input text, in input order.
/// Callers renormalize, so providers need not emit exact unit vectors.
pub trait EmbedProvider: Send + Sync {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;

    /// Vector dimensionality this provider emits.
    fn dim(&self) -> usize;

    /// Largest batch the provider accepts in one call.
    fn max_batch(&self) -> usize {
        64
    }

    fn model_id(&self) -> &str;
}

/// Deterministic offline embedder: hashes the token multiset of a text
/// into a pseudo-random direction. Identical texts map to identical
/// vectors, and texts sharing tokens land closer together, which is
/// enough structure for toy corpora and CI.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    max_batch: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashEmbedder {
            dim,
            seed,
            max_batch: 64,
        }
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    fn token_direction(&self, token: &str) -> impl Iterator<Item = f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed);
        std::iter::repeat_with(move || {
            // Box-Muller from two uniforms keeps directions isotropic.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let lowered = text.to_lowercase();
        let mut tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push(lowered.trim());
        }
        let mut acc = vec![0.0; self.dim];
        for token in tokens {
            for (slot, component) in acc.iter_mut().zip(self.token_direction(token)) {
                *slot += component;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            acc[0] = 1.0;
        }
        acc
    }
}

impl EmbedProvider for HashEmbedder {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }

    fn model_id(&self) -> &str {
        "hash-embedder"
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP embedding client.
///
/// Wire format: `POST {model, input: [string...]}` returning
/// `{vectors: [[float...]...]}`, JSON both ways.
pub struct HttpEmbedder {
    config: EmbeddingProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: EmbeddingProviderConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| EmbedError::Provider {
                transient: false,
                message: e.to_string(),
            })?;
        Ok(HttpEmbedder { config, client })
    }
}

impl EmbedProvider for HttpEmbedder {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = EmbedRequest {
            model: &self.config.model_id,
            input: texts,
        };
        let response = self
            .client
            .post(&self.config.endpoint)
            .json(&body)
            .send()
            .map_err(|e| EmbedError::Provider {
                transient: e.is_timeout() || e.is_connect(),
                message: e.to_string(),
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(EmbedError::Provider {
                transient: status.is_server_error() || status.as_u16() == 429,
                message: format!("embedding endpoint returned {status}"),
            });
        }
        let parsed: EmbedResponse = response.json().map_err(|e| EmbedError::Provider {
            transient: false,
            message: format!("invalid embedding response: {e}"),
        })?;
        Ok(parsed.vectors)
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn max_batch(&self) -> usize {
        self.config.max_batch
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }
}
