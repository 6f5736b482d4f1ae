//! Small shared helpers: stable hashing and retry with exponential backoff.

use std::time::Duration;

/// FNV-1a 64-bit hash. Stable across platforms and runs, used for
/// deterministic seeding and config fingerprints (not security).
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Hex fingerprint of arbitrary bytes, 16 chars.
pub fn fingerprint(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a(bytes))
}

/// Retry schedule for transient provider failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    /// Total attempts, including the first one. Must be >= 1.
    pub max_attempts: u32,
    /// Delay before the first retry.
    pub base_delay: Duration,
    /// Upper bound on any single delay.
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Policy with no waiting between attempts, for tests and mocks.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `retry` (1-based), doubling each time.
    pub fn delay_for(&self, retry: u32) -> Duration {
        let factor = 1u32 << retry.saturating_sub(1).min(16);
        (self.base_delay * factor).min(self.max_delay)
    }
}

/// Runs `op` until it succeeds, returns a non-transient error, or the
/// attempt budget is exhausted. `is_transient` decides which errors are
/// worth retrying.
pub fn retry<T, E>(
    policy: &RetryPolicy,
    mut is_transient: impl FnMut(&E) -> bool,
    mut op: impl FnMut() -> Result<T, E>,
) -> Result<T, E> {
    let attempts = policy.max_attempts.max(1);
    let mut last_err = None;
    for attempt in 1..=attempts {
        match op() {
            Ok(v) => return Ok(v),
            Err(e) => {
                if attempt == attempts || !is_transient(&e) {
                    return Err(e);
                }
                let wait = policy.delay_for(attempt);
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
                last_err = Some(e);
            }
        }
    }
    // Unreachable: the loop always returns on the final attempt.
    Err(last_err.expect("retry loop ran at least once"))
}
