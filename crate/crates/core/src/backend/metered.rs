use std::sync::atomic::{AtomicU64, Ordering};

use super::{Backend, BackendError, GenerationConfig, LlmResponse};

/// Counters for backend traffic during one run.
#[derive(Debug, Default)]
pub struct UsageMeter {
    calls: AtomicU64,
    failed_calls: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
    total_tokens: AtomicU64,
}

impl UsageMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn failed_calls(&self) -> u64 {
        self.failed_calls.load(Ordering::Relaxed)
    }

    pub fn prompt_tokens(&self) -> u64 {
        self.prompt_tokens.load(Ordering::Relaxed)
    }

    pub fn completion_tokens(&self) -> u64 {
        self.completion_tokens.load(Ordering::Relaxed)
    }

    /// Sum of `usage.total_tokens` over successful calls.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens.load(Ordering::Relaxed)
    }

    fn record(&self, result: &Result<LlmResponse, BackendError>) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match result {
            Ok(resp) => {
                self.prompt_tokens
                    .fetch_add(resp.usage.prompt_tokens, Ordering::Relaxed);
                self.completion_tokens
                    .fetch_add(resp.usage.completion_tokens, Ordering::Relaxed);
                self.total_tokens
                    .fetch_add(resp.usage.total_tokens, Ordering::Relaxed);
            }
            Err(_) => {
                self.failed_calls.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

/// Forwards to an inner backend while recording every call in a meter.
pub struct MeteredBackend<'a> {
    inner: &'a dyn Backend,
    meter: &'a UsageMeter,
}

impl<'a> MeteredBackend<'a> {
    pub fn new(inner: &'a dyn Backend, meter: &'a UsageMeter) -> Self {
        Self { inner, meter }
    }
}

impl Backend for MeteredBackend<'_> {
    fn generate(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<LlmResponse, BackendError> {
        let result = self.inner.generate(prompt, config);
        self.meter.record(&result);
        result
    }

    fn model(&self) -> &str {
        self.inner.model()
    }

    fn supports_streaming(&self) -> bool {
        self.inner.supports_streaming()
    }

    fn default_config(&self) -> GenerationConfig {
        self.inner.default_config()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockScript};

    #[test]
    fn counts_calls_and_tokens() {
        let mock = MockBackend::new(MockScript::always("one two"));
        let meter = UsageMeter::new();
        let metered = MeteredBackend::new(&mock, &meter);
        let cfg = GenerationConfig::default();
        metered.generate("a b c", &cfg).unwrap();
        metered.generate("d", &cfg).unwrap();
        assert!(metered.generate("", &cfg).is_err());
        assert_eq!(meter.calls(), 3);
        assert_eq!(meter.failed_calls(), 1);
        assert_eq!(meter.prompt_tokens(), 4);
        assert_eq!(meter.completion_tokens(), 4);
        assert_eq!(meter.total_tokens(), 8);
    }
}
