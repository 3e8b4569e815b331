//! LLM backend contract and implementations.
//!
//! Every backend maps `(prompt, GenerationConfig)` to an [`LlmResponse`]
//! carrying generated text, token usage and the model identifier. Skills
//! only ever see `&dyn Backend`; they never branch on which provider sits
//! behind it.

mod build;
mod metered;
mod mock;
mod openai;
mod retry;
mod sequence;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use build::{build_backend, BackendKind, BackendSpec, BuildError};
pub use metered::{MeteredBackend, UsageMeter};
pub use mock::{MockBackend, MockScript, ScriptRule};
pub use openai::{OpenAiCompatibleBackend, GROQ_BASE_URL, OPENAI_BASE_URL, REQUEST_TIMEOUT};
pub use retry::{generate_with_retry, AttemptLog, AttemptRecord, RetryOutcome, RetryPolicy};
pub use sequence::SequenceBackend;

/// Sampling parameters for a single generation call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    temperature: f64,
    max_tokens: u32,
    top_p: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 1024,
            top_p: 1.0,
        }
    }
}

impl GenerationConfig {
    pub fn new(temperature: f64, max_tokens: u32, top_p: f64) -> Result<Self, BackendError> {
        Self::default()
            .with_temperature(temperature)?
            .with_max_tokens(max_tokens)?
            .with_top_p(top_p)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, BackendError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(BackendError::InvalidConfig(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Result<Self, BackendError> {
        if max_tokens == 0 {
            return Err(BackendError::InvalidConfig(
                "max_tokens must be positive".into(),
            ));
        }
        self.max_tokens = max_tokens;
        Ok(self)
    }

    pub fn with_top_p(mut self, top_p: f64) -> Result<Self, BackendError> {
        if !(top_p > 0.0 && top_p <= 1.0) {
            return Err(BackendError::InvalidConfig(format!(
                "top_p {top_p} outside (0, 1]"
            )));
        }
        self.top_p = top_p;
        Ok(self)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn max_tokens(&self) -> u32 {
        self.max_tokens
    }

    pub fn top_p(&self) -> f64 {
        self.top_p
    }
}

/// Token accounting for one call. `total_tokens` is always the sum of the
/// other two fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

impl Usage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
            total_tokens: prompt_tokens + completion_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub usage: Usage,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("prompt must be nonempty")]
    EmptyPrompt,
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("authentication failed (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("rate limited (HTTP 429): {0}")]
    RateLimited(String),
    #[error("provider error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Provider { status: Option<u16>, message: String },
    #[error("network error: {message}")]
    Network { message: String, timeout: bool },
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries {
        attempts: u32,
        last: Box<BackendError>,
    },
}

impl BackendError {
    /// HTTP 429, HTTP 5xx, and connect/read failures are transient.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::RateLimited(_) | BackendError::Network { .. } => true,
            BackendError::Provider {
                status: Some(status),
                ..
            } => (500..600).contains(status),
            _ => false,
        }
    }

    /// Maps an HTTP status (non-2xx) and body excerpt onto an error class.
    pub fn from_status(status: u16, message: impl Into<String>) -> Self {
        let message = message.into();
        match status {
            401 | 403 => BackendError::Auth { status, message },
            429 => BackendError::RateLimited(message),
            _ => BackendError::Provider {
                status: Some(status),
                message,
            },
        }
    }
}

/// A text generation provider.
pub trait Backend: Send + Sync {
    fn generate(&self, prompt: &str, config: &GenerationConfig)
        -> Result<LlmResponse, BackendError>;

    fn model(&self) -> &str;

    /// Streaming delivery is not implemented by any backend yet.
    fn supports_streaming(&self) -> bool {
        false
    }

    /// Generation parameters skills should start from for calls through
    /// this backend.
    fn default_config(&self) -> GenerationConfig {
        GenerationConfig::default()
    }
}

impl fmt::Debug for dyn Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backend").field("model", &self.model()).finish()
    }
}

/// Wraps a backend with different generation defaults.
pub struct WithDefaults<'a> {
    inner: &'a dyn Backend,
    defaults: GenerationConfig,
}

impl<'a> WithDefaults<'a> {
    pub fn new(inner: &'a dyn Backend, defaults: GenerationConfig) -> Self {
        Self { inner, defaults }
    }
}

impl Backend for WithDefaults<'_> {
    fn generate(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<LlmResponse, BackendError> {
        self.inner.generate(prompt, config)
    }

    fn model(&self) -> &str {
        self.inner.model()
    }

    fn supports_streaming(&self) -> bool {
        self.inner.supports_streaming()
    }

    fn default_config(&self) -> GenerationConfig {
        self.defaults
    }
}

/// Number of maximal runs of non-whitespace characters.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub(crate) fn check_prompt(prompt: &str) -> Result<(), BackendError> {
    if prompt.is_empty() {
        Err(BackendError::EmptyPrompt)
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_defaults() {
        let cfg = GenerationConfig::default();
        assert_eq!(cfg.temperature(), 0.7);
        assert_eq!(cfg.max_tokens(), 1024);
        assert_eq!(cfg.top_p(), 1.0);
    }

    #[test]
    fn generation_ranges_are_enforced() {
        assert!(GenerationConfig::new(2.0, 1, 1.0).is_ok());
        assert!(GenerationConfig::new(0.0, 1, 0.01).is_ok());
        assert!(GenerationConfig::new(2.01, 1, 1.0).is_err());
        assert!(GenerationConfig::new(-0.1, 1, 1.0).is_err());
        assert!(GenerationConfig::new(0.7, 0, 1.0).is_err());
        assert!(GenerationConfig::new(0.7, 1, 0.0).is_err());
        assert!(GenerationConfig::new(0.7, 1, 1.5).is_err());
        assert!(GenerationConfig::new(f64::NAN, 1, 1.0).is_err());
    }

    #[test]
    fn token_estimates() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("hello world"), 2);
        assert_eq!(estimate_tokens("a  b\tc\n"), 3);
        assert_eq!(estimate_tokens("   "), 0);
    }

    #[test]
    fn status_classification() {
        assert!(matches!(BackendError::from_status(401, ""), BackendError::Auth { .. }));
        assert!(matches!(BackendError::from_status(403, ""), BackendError::Auth { .. }));
        assert!(BackendError::from_status(429, "").is_retryable());
        assert!(BackendError::from_status(503, "").is_retryable());
        assert!(!BackendError::from_status(400, "").is_retryable());
        assert!(!BackendError::from_status(401, "").is_retryable());
        let malformed = BackendError::Provider {
            status: None,
            message: "bad json".into(),
        };
        assert!(!malformed.is_retryable());
    }
}
