use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{check_prompt, estimate_tokens, Backend, BackendError, GenerationConfig, LlmResponse, Usage};

/// Replays a fixed sequence of outcomes, one per call, regardless of the
/// prompt. Used to script transient failures and recoveries.
#[derive(Debug)]
pub struct SequenceBackend {
    outcomes: Mutex<VecDeque<Result<String, BackendError>>>,
    calls: AtomicUsize,
    model: String,
}

impl SequenceBackend {
    pub fn new(outcomes: impl IntoIterator<Item = Result<String, BackendError>>) -> Self {
        Self {
            outcomes: Mutex::new(outcomes.into_iter().collect()),
            calls: AtomicUsize::new(0),
            model: "sequence".into(),
        }
    }

    /// Number of `generate` calls made so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for SequenceBackend {
    fn generate(
        &self,
        prompt: &str,
        _config: &GenerationConfig,
    ) -> Result<LlmResponse, BackendError> {
        check_prompt(prompt)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let next = self
            .outcomes
            .lock()
            .expect("sequence lock poisoned")
            .pop_front()
            .unwrap_or_else(|| {
                Err(BackendError::Provider {
                    status: None,
                    message: "scripted sequence exhausted".into(),
                })
            });
        next.map(|text| LlmResponse {
            usage: Usage::new(estimate_tokens(prompt), estimate_tokens(&text)),
            text,
            model: self.model.clone(),
        })
    }

    fn model(&self) -> &str {
        &self.model
    }
}
