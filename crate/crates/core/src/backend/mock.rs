use serde::{Deserialize, Serialize};

use super::{check_prompt, estimate_tokens, Backend, BackendError, GenerationConfig, LlmResponse, Usage};

/// One `(matcher, response)` pair. The matcher `*` matches every prompt;
/// any other matcher matches prompts that contain it as a substring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: String,
    pub response: String,
}

impl ScriptRule {
    pub fn new(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: matcher.into(),
            response: response.into(),
        }
    }

    pub fn matches(&self, prompt: &str) -> bool {
        self.matcher == "*" || prompt.contains(&self.matcher)
    }
}

/// Ordered rules; the first matching rule wins.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    pub rules: Vec<ScriptRule>,
}

impl MockScript {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self { rules }
    }

    /// A script answering every prompt with `response`.
    pub fn always(response: impl Into<String>) -> Self {
        Self::new(vec![ScriptRule::new("*", response)])
    }

    pub fn respond(&self, prompt: &str) -> Option<&str> {
        self.rules
            .iter()
            .find(|r| r.matches(prompt))
            .map(|r| r.response.as_str())
    }
}

/// Deterministic scripted backend. Output is a pure function of the script
/// and the prompt; usage comes from [`estimate_tokens`].
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: MockScript,
    model: String,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self::with_model(script, "mock")
    }

    pub fn with_model(script: MockScript, model: impl Into<String>) -> Self {
        Self {
            script,
            model: model.into(),
        }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl Backend for MockBackend {
    fn generate(
        &self,
        prompt: &str,
        _config: &GenerationConfig,
    ) -> Result<LlmResponse, BackendError> {
        check_prompt(prompt)?;
        let text = self.script.respond(prompt).ok_or_else(|| BackendError::Provider {
            status: None,
            message: "mock script has no rule matching the prompt".into(),
        })?;
        Ok(LlmResponse {
            text: text.to_string(),
            usage: Usage::new(estimate_tokens(prompt), estimate_tokens(text)),
            model: self.model.clone(),
        })
    }

    fn model(&self) -> &str {
        &self.model
    }
}
