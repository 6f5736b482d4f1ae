//! Text embedding: unit-norm vectors, cosine similarity, and pluggable
//! embedding providers.
//!
//! Vectors are always renormalized locally, whatever the provider returned,
//! so cosine similarity reduces to a dot product and provider quirks stay
//! contained. A deterministic hash-based provider keeps the whole system
//! runnable offline.

mod provider;

pub use provider::{EmbedProvider, HashEmbedder, HttpEmbedder};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::RetryPolicy;

/// Norm tolerance for unit vectors.
pub const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("empty input batch")]
    EmptyBatch,
    #[error("text at index {0} is empty after trimming")]
    EmptyText(usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("vector norm too small to normalize")]
    ZeroNorm,
    #[error("embedding provider error{}: {message}", if *.transient { " (transient)" } else { "" })]
    Provider { transient: bool, message: String },
}

impl EmbedError {
    pub fn is_transient(&self) -> bool {
        matches!(self, EmbedError::Provider { transient: true, .. })
    }
}

/// Fixed-dimension embedding with Euclidean norm 1 (within [`NORM_EPS`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitVector {
    values: Vec<f64>,
}

impl UnitVector {
    /// Normalizes `values` to unit length.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::ZeroNorm);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(EmbedError::ZeroNorm);
        }
        Ok(UnitVector {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Accepts a vector that is already unit-norm within [`NORM_EPS`].
    pub fn from_unit(values: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_EPS {
            return Err(EmbedError::ZeroNorm);
        }
        Ok(UnitVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Dot product; equals cosine similarity for unit vectors.
    pub fn dot(&self, other: &UnitVector) -> Result<f64, EmbedError> {
        if self.dim() != other.dim() {
            return Err(EmbedError::DimMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }
}

/// Cosine similarity of two unit vectors. Symmetric, in [-1, 1] up to
/// floating-point rounding.
pub fn cosine(u: &UnitVector, v: &UnitVector) -> Result<f64, EmbedError> {
    u.dot(v)
}

/// Connection settings for an embedding endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    pub endpoint: String,
    pub model_id: String,
    pub dim: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_batch() -> usize {
    64
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::DimMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if self.max_batch == 0 {
            return Err(EmbedError::Provider {
                transient: false,
                message: "max_batch must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Embeds `texts` through `provider`, preserving order. Splits the input
/// into provider-sized batches, retries transient failures per batch, and
/// renormalizes every returned vector to unit length.
pub fn embed_batch(
    texts: &[String],
    provider: &dyn EmbedProvider,
    retry: &RetryPolicy,
) -> Result<Vec<UnitVector>, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::EmptyBatch);
    }
    for (i, t) in texts.iter().enumerate() {
        if t.trim().is_empty() {
            return Err(EmbedError::EmptyText(i));
        }
    }
    let dim = provider.dim();
    let chunk = provider.max_batch().max(1);
    let mut out = Vec::with_capacity(texts.len());
    for batch in texts.chunks(chunk) {
        let raw = crate::util::retry(retry, EmbedError::is_transient, || {
            provider.embed_raw(batch)
        })?;
        if raw.len() != batch.len() {
            return Err(EmbedError::Provider {
                transient: false,
                message: format!(
                    "provider returned {} vectors for {} texts",
                    raw.len(),
                    batch.len()
                ),
            });
        }
        for values in raw {
            if values.len() != dim {
                return Err(EmbedError::DimMismatch {
                    expected: dim,
                    actual: values.len(),
                });
            }
            out.push(UnitVector::new(values)?);
        }
    }
    Ok(out)
}

/// Like [`embed_batch`] but runs up to `in_flight` provider batches on
/// worker threads. Output order still matches input order.
pub fn embed_batch_concurrent(
    texts: &[String],
    provider: &(dyn EmbedProvider + Sync),
    retry: &RetryPolicy,
    in_flight: usize,
) -> Result<Vec<UnitVector>, EmbedError> {
    if in_flight <= 1 {
        return embed_batch(texts, provider, retry);
    }
    if texts.is_empty() {
        return Err(EmbedError::EmptyBatch);
    }
    for (i, t) in texts.iter().enumerate() {
        if t.trim().is_empty() {
            return Err(EmbedError::EmptyText(i));
        }
    }
    let dim = provider.dim();
    let chunk = provider.max_batch().max(1);
    let batches: Vec<&[String]> = texts.chunks(chunk).collect();
    let slots: Vec<std::sync::Mutex<Option<Result<Vec<Vec<f64>>, EmbedError>>>> =
        batches.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..in_flight.min(batches.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= batches.len() {
                    break;
                }
                let res = crate::util::retry(retry, EmbedError::is_transient, || {
                    provider.embed_raw(batches[i])
                });
                *slots[i].lock().expect("slot lock") = Some(res);
            });
        }
    });

    let mut out = Vec::with_capacity(texts.len());
    for (i, slot) in slots.into_iter().enumerate() {
        let raw = slot
            .into_inner()
            .expect("slot lock")
            .expect("batch slot filled")?;
        if raw.len() != batches[i].len() {
            return Err(EmbedError::Provider {
                transient: false,
                message: format!(
                    "provider returned {} vectors for {} texts",
                    raw.len(),
                    batches[i].len()
                ),
            });
        }
        for values in raw {
            if values.len() != dim {
                return Err(EmbedError::DimMismatch {
                    expected: dim,
                    actual: values.len(),
                });
            }
            out.push(UnitVector::new(values)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uv(values: &[f64]) -> UnitVector {
        UnitVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_identity_is_one() {
        let x = uv(&[0.3, -0.4, 0.5]);
        assert!((cosine(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        let u = uv(&[1.0, 0.0]);
        let v = uv(&[0.0, 1.0]);
        assert_eq!(cosine(&u, &v).unwrap(), 0.0);
    }

    #[test]
    fn cosine_hand_computed() {
        // dot((1,0,0), (0.6,0.8,0)) = 0.6
        let u = uv(&[1.0, 0.0, 0.0]);
        let v = uv(&[0.6, 0.8, 0.0]);
        assert!((cosine(&u, &v).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cosine_dim_mismatch_errors() {
        let u = uv(&[1.0, 0.0]);
        let v = uv(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            cosine(&u, &v),
            Err(EmbedError::DimMismatch { .. })
        ));
    }

    #[test]
    fn new_normalizes() {
        let v = uv(&[3.0, 4.0]);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!((v.values()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(matches!(
            UnitVector::new(vec![0.0, 0.0]),
            Err(EmbedError::ZeroNorm)
        ));
        assert!(matches!(UnitVector::new(vec![]), Err(EmbedError::ZeroNorm)));
    }

    #[test]
    fn embed_batch_rejects_empty_inputs() {
        let p = HashEmbedder::new(8, 1);
        assert!(matches!(
            embed_batch(&[], &p, &RetryPolicy::immediate(1)),
            Err(EmbedError::EmptyBatch)
        ));
        assert!(matches!(
            embed_batch(&["  ".into()], &p, &RetryPolicy::immediate(1)),
            Err(EmbedError::EmptyText(0))
        ));
    }

    #[test]
    fn embed_batch_deterministic_and_normalized() {
        let p = HashEmbedder::new(16, 42);
        let texts = vec!["use a set".to_string(), "use a set".to_string()];
        let out = embed_batch(&texts, &p, &RetryPolicy::immediate(1)).unwrap();
        assert_eq!(out[0], out[1]);
        for v in &out {
            assert!((v.norm() - 1.0).abs() <= NORM_EPS);
        }
    }

    #[test]
    fn embed_batch_invariance() {
        let p = HashEmbedder::new(16, 7);
        let texts: Vec<String> = ["sort a list", "read a file", "parse json"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let whole = embed_batch(&texts, &p, &RetryPolicy::immediate(1)).unwrap();
        for (i, t) in texts.iter().enumerate() {
            let single =
                embed_batch(std::slice::from_ref(t), &p, &RetryPolicy::immediate(1)).unwrap();
            assert_eq!(whole[i], single[0]);
        }
    }

    #[test]
    fn concurrent_matches_sequential() {
        let p = HashEmbedder::new(12, 99).with_max_batch(2);
        let texts: Vec<String> = (0..9).map(|i| format!("text number {i}")).collect();
        let seq = embed_batch(&texts, &p, &RetryPolicy::immediate(1)).unwrap();
        let conc = embed_batch_concurrent(&texts, &p, &RetryPolicy::immediate(1), 4).unwrap();
        assert_eq!(seq, conc);
    }

    struct WrongDim;

    impl EmbedProvider for WrongDim {
        fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            Ok(texts.iter().map(|_| vec![1.0, 0.0, 0.0]).collect())
        }
        fn dim(&self) -> usize {
            2
        }
        fn model_id(&self) -> &str {
            "wrong-dim"
        }
    }

    #[test]
    fn wrong_dim_from_provider_errors() {
        let texts = vec!["x".to_string()];
        assert!(matches!(
            embed_batch(&texts, &WrongDim, &RetryPolicy::immediate(1)),
            Err(EmbedError::DimMismatch {
                expected: 2,
                actual: 3
            })
        ));
    }

    struct Flaky {
        fails: std::sync::Mutex<u32>,
    }

    impl EmbedProvider for Flaky {
        fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            let mut left = self.fails.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(EmbedError::Provider {
                    transient: true,
                    message: "503".into(),
                });
            }
            Ok(texts.iter().map(|_| vec![1.0, 0.0]).collect())
        }
        fn dim(&self) -> usize {
            2
        }
        fn model_id(&self) -> &str {
            "flaky"
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let p = Flaky {
            fails: std::sync::Mutex::new(2),
        };
        let out = embed_batch(
            &["a".to_string()],
            &p,
            &RetryPolicy::immediate(3),
        );
        assert!(out.is_ok());
    }
}
