//! Bounded exponential backoff with optional full jitter.
//!
//! One policy type drives both upstream model calls and webhook delivery.
//! The schedule is pure and unit-testable; the executor is generic over the
//! sleep so tests never wait on wall clock.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// How the scheduled delay is spread before sleeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Jitter {
    /// Sleep exactly the scheduled delay.
    None,
    /// Sleep a uniform random fraction of the scheduled delay.
    Full,
}

/// Exponential backoff: delay after attempt n is
/// `min(cap, base * factor^(n-1))`, optionally jittered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_ms: u64,
    pub factor: Scalar,
    pub cap_ms: u64,
    pub jitter: Jitter,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self::lmm_default()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RetryError {
    #[error("max_attempts must be >= 1")]
    NoAttempts,
    #[error("factor must be >= 1 and finite (got {0})")]
    BadFactor(Scalar),
}

impl RetryPolicy {
    /// Default schedule for upstream model calls: 8 attempts, 500 ms base,
    /// doubling, capped at 8 s, full jitter.
    pub fn lmm_default() -> Self {
        Self {
            max_attempts: 8,
            base_ms: 500,
            factor: 2.0,
            cap_ms: 8_000,
            jitter: Jitter::Full,
        }
    }

    /// Default schedule for webhook delivery: 5 attempts on the same curve.
    pub fn notify_default() -> Self {
        Self {
            max_attempts: 5,
            ..Self::lmm_default()
        }
    }

    pub fn validate(&self) -> Result<(), RetryError> {
        if self.max_attempts == 0 {
            return Err(RetryError::NoAttempts);
        }
        if !(self.factor >= 1.0 && self.factor.is_finite()) {
            return Err(RetryError::BadFactor(self.factor));
        }
        Ok(())
    }

    /// Deterministic delay scheduled after failed attempt `n` (1-based),
    /// before jitter.
    pub fn scheduled_delay(&self, n: u32) -> Duration {
        let cap = self.cap_ms as Scalar;
        let raw = self.base_ms as Scalar * self.factor.powi(n.saturating_sub(1) as i32);
        Duration::from_secs_f64(raw.min(cap) / 1000.0)
    }

    /// Applies this policy's jitter to a scheduled delay.
    pub fn jittered<R: Rng + ?Sized>(&self, scheduled: Duration, rng: &mut R) -> Duration {
        match self.jitter {
            Jitter::None => scheduled,
            Jitter::Full => scheduled.mul_f64(rng.random::<f64>()),
        }
    }
}

/// Runs `op` under `policy`. `op` gets the 1-based attempt number; a failed
/// attempt repeats only while `is_retryable` says so and attempts remain.
/// Returns the final outcome and how many attempts ran.
pub fn execute<T, E>(
    policy: &RetryPolicy,
    op: impl FnMut(u32) -> Result<T, E>,
    is_retryable: impl Fn(&E) -> bool,
) -> (Result<T, E>, u32) {
    execute_with(policy, op, is_retryable, std::thread::sleep, &mut rand::rng())
}

/// [`execute`] with the sleep and randomness injected, for tests.
pub fn execute_with<T, E, R: Rng + ?Sized>(
    policy: &RetryPolicy,
    mut op: impl FnMut(u32) -> Result<T, E>,
    is_retryable: impl Fn(&E) -> bool,
    mut sleep: impl FnMut(Duration),
    rng: &mut R,
) -> (Result<T, E>, u32) {
    let max = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op(attempt) {
            Ok(v) => return (Ok(v), attempt),
            Err(e) => {
                if attempt >= max || !is_retryable(&e) {
                    return (Err(e), attempt);
                }
                sleep(policy.jittered(policy.scheduled_delay(attempt), rng));
            }
        }
    }
}
