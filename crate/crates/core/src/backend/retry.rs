//! Exponential backoff around [`Backend::generate`].
//!
//! Attempt `k` (1-based, `k >= 2`) waits `base_delay * factor^(k-2)`,
//! scaled by a uniform jitter factor in `[1 - jitter, 1 + jitter]`.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;
use tracing::debug;

use super::{Backend, BackendError, GenerationConfig, LlmResponse};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    /// Relative jitter half-width; 0.2 means ±20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(1000),
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// A single attempt, no retries.
    pub fn none() -> Self {
        Self {
            max_attempts: 1,
            ..Self::default()
        }
    }

    /// Un-jittered wait before attempt `attempt` (1-based). Zero for the first.
    pub fn nominal_delay(&self, attempt: u32) -> Duration {
        if attempt < 2 {
            return Duration::ZERO;
        }
        self.base_delay
            .mul_f64(self.factor.powi(attempt as i32 - 2))
    }

    fn jittered(&self, nominal: Duration) -> Duration {
        if self.jitter <= 0.0 || nominal.is_zero() {
            return nominal;
        }
        let scale = rand::rng().random_range(1.0 - self.jitter..=1.0 + self.jitter);
        nominal.mul_f64(scale)
    }

    /// Runs `backend.generate` under this policy, returning the final result
    /// together with the per-attempt log.
    pub fn run(
        &self,
        backend: &dyn Backend,
        prompt: &str,
        config: &GenerationConfig,
    ) -> (Result<LlmResponse, BackendError>, AttemptLog) {
        let max_attempts = self.max_attempts.max(1);
        let mut log = AttemptLog::default();
        let mut last_end: Option<Instant> = None;
        let mut attempt = 1;
        loop {
            let nominal = self.nominal_delay(attempt);
            let planned = self.jittered(nominal);
            if !planned.is_zero() {
                std::thread::sleep(planned);
            }
            let start = Instant::now();
            let waited = last_end.map(|end| start - end).unwrap_or(Duration::ZERO);
            let result = backend.generate(prompt, config);
            last_end = Some(Instant::now());
            log.attempts.push(AttemptRecord {
                attempt,
                nominal_delay: nominal,
                planned_delay: planned,
                measured_delay: waited,
                error: result.as_ref().err().map(ToString::to_string),
            });
            log.total_delay += waited;
            match result {
                Ok(resp) => return (Ok(resp), log),
                Err(err) if !err.is_retryable() => return (Err(err), log),
                Err(err) if attempt >= max_attempts => {
                    let exhausted = BackendError::ExhaustedRetries {
                        attempts: attempt,
                        last: Box::new(err),
                    };
                    return (Err(exhausted), log);
                }
                Err(err) => {
                    debug!(attempt, error = %err, "retrying generation");
                    attempt += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub nominal_delay: Duration,
    pub planned_delay: Duration,
    /// Monotonic time between the end of the previous attempt and the start
    /// of this one.
    pub measured_delay: Duration,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AttemptLog {
    pub attempts: Vec<AttemptRecord>,
    pub total_delay: Duration,
}

impl AttemptLog {
    pub fn attempt_count(&self) -> u32 {
        self.attempts.len() as u32
    }

    /// Measured waits before the second and later attempts.
    pub fn measured_delays(&self) -> Vec<Duration> {
        self.attempts.iter().skip(1).map(|a| a.measured_delay).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryOutcome {
    pub response: LlmResponse,
    pub log: AttemptLog,
}

/// Generates with retries on transient errors. Non-retryable errors are
/// returned after the attempt that produced them.
pub fn generate_with_retry(
    backend: &dyn Backend,
    prompt: &str,
    config: &GenerationConfig,
    policy: &RetryPolicy,
) -> Result<RetryOutcome, BackendError> {
    let (result, log) = policy.run(backend, prompt, config);
    result.map(|response| RetryOutcome { response, log })
}
