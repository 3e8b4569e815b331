//! Bounded HTTP GET shared by the scraper and the feed monitor.

use std::io::Read;
use std::sync::OnceLock;
use std::time::Duration;

use url::Url;

use crate::skill::SkillError;
use crate::value::Context;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const MAX_BODY_BYTES: usize = 2 * 1024 * 1024;
pub const MAX_REDIRECTS: usize = 5;
pub const USER_AGENT: &str = concat!(
    "agentloom/",
    env!("CARGO_PKG_VERSION"),
    " (+skill pipeline fetcher)"
);

#[derive(Debug)]
pub struct Fetched {
    pub final_url: Url,
    pub body: Vec<u8>,
}

/// Lazily built client; building spawns a runtime thread, so skills that
/// are constructed but never run do not pay for one.
#[derive(Debug, Default)]
pub struct Fetcher {
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
}

impl Clone for Fetcher {
    fn clone(&self) -> Self {
        Self::default()
    }
}

impl Fetcher {
    fn client(&self) -> Result<&reqwest::blocking::Client, SkillError> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .user_agent(USER_AGENT)
                    .redirect(reqwest::redirect::Policy::limited(MAX_REDIRECTS))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| SkillError::Failed(format!("cannot build HTTP client: {e}")))
    }

    pub fn get(&self, url: &Url, timeout: Duration) -> Result<Fetched, SkillError> {
        let network = |e: reqwest::Error| SkillError::Network {
            url: url.to_string(),
            message: e.to_string(),
        };
        let response = self
            .client()?
            .get(url.clone())
            .timeout(timeout)
            .send()
            .map_err(network)?;
        let status = response.status();
        let final_url = response.url().clone();
        if !status.is_success() {
            return Err(SkillError::Http {
                status: status.as_u16(),
                url: final_url.to_string(),
            });
        }
        if response
            .content_length()
            .is_some_and(|len| len > MAX_BODY_BYTES as u64)
        {
            return Err(SkillError::Oversize {
                limit: MAX_BODY_BYTES,
            });
        }
        let mut body = Vec::new();
        response
            .take(MAX_BODY_BYTES as u64 + 1)
            .read_to_end(&mut body)
            .map_err(|e| SkillError::Network {
                url: url.to_string(),
                message: e.to_string(),
            })?;
        if body.len() > MAX_BODY_BYTES {
            return Err(SkillError::Oversize {
                limit: MAX_BODY_BYTES,
            });
        }
        Ok(Fetched { final_url, body })
    }
}

/// Reads `key` from the context as an absolute http(s) URL.
pub fn url_input(context: &Context, key: &str) -> Result<Url, SkillError> {
    let raw = context
        .get(key)
        .ok_or_else(|| SkillError::missing(key))?
        .as_str()
        .ok_or_else(|| SkillError::invalid(key, "must be text"))?;
    let url = Url::parse(raw)
        .map_err(|e| SkillError::invalid(key, format!("not an absolute URL: {e}")))?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(SkillError::invalid(key, "scheme must be http or https"));
    }
    Ok(url)
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
