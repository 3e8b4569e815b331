//! OpenAI-compatible chat-completions client (OpenAI, Groq, local servers).

use std::fmt;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{check_prompt, Backend, BackendError, GenerationConfig, LlmResponse, Usage};

pub const OPENAI_BASE_URL: &str = "https://api.openai.com";
pub const GROQ_BASE_URL: &str = "https://api.groq.com/openai";
pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

const ERROR_EXCERPT: usize = 200;

pub struct OpenAiCompatibleBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl fmt::Debug for OpenAiCompatibleBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiCompatibleBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl OpenAiCompatibleBackend {
    /// `base_url` is the server root; requests go to `{base_url}/v1/chat/completions`.
    pub fn new(
        base_url: &str,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .connect_timeout(REQUEST_TIMEOUT)
            .timeout(REQUEST_TIMEOUT)
            .build()
            .map_err(|e| BackendError::Network {
                message: format!("failed to build HTTP client: {e}"),
                timeout: false,
            })?;
        Ok(Self {
            client,
            endpoint: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            model: model.into(),
            api_key,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<WireUsage>,
    model: Option<String>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn excerpt(body: &str) -> String {
    body.chars().take(ERROR_EXCERPT).collect()
}

fn transport_error(err: reqwest::Error) -> BackendError {
    BackendError::Network {
        message: err.to_string(),
        timeout: err.is_timeout(),
    }
}

impl Backend for OpenAiCompatibleBackend {
    fn generate(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<LlmResponse, BackendError> {
        check_prompt(prompt)?;
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": config.temperature(),
            "max_tokens": config.max_tokens(),
            "top_p": config.top_p(),
        });
        let mut request = self
            .client
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(transport_error)?;
        let status = response.status().as_u16();
        let text = response.text().map_err(transport_error)?;
        if !(200..300).contains(&status) {
            return Err(BackendError::from_status(status, excerpt(&text)));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Provider {
                status: None,
                message: format!("malformed completion body: {e}"),
            })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Provider {
                status: None,
                message: "completion body has no choices[0].message.content".into(),
            })?;
        let usage = parsed
            .usage
            .map(|u| Usage::new(u.prompt_tokens, u.completion_tokens))
            .unwrap_or_default();
        Ok(LlmResponse {
            text: content,
            usage,
            model: parsed.model.unwrap_or_else(|| self.model.clone()),
        })
    }

    fn model(&self) -> &str {
        &self.model
    }
}
