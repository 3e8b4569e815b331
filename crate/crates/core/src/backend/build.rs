use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::{
    Backend, BackendError, MockBackend, MockScript, OpenAiCompatibleBackend, GROQ_BASE_URL,
    OPENAI_BASE_URL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendKind {
    OpenAi,
    Groq,
    OpenAiCompatible,
    Mock,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::OpenAi => "openai",
            BackendKind::Groq => "groq",
            BackendKind::OpenAiCompatible => "openai_compatible",
            BackendKind::Mock => "mock",
        }
    }

    /// Conventional credential variable when a spec names none.
    pub fn default_key_var(&self) -> Option<&'static str> {
        match self {
            BackendKind::OpenAi => Some("OPENAI_API_KEY"),
            BackendKind::Groq => Some("GROQ_API_KEY"),
            _ => None,
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "openai" => Ok(BackendKind::OpenAi),
            "groq" => Ok(BackendKind::Groq),
            "openai_compatible" => Ok(BackendKind::OpenAiCompatible),
            "mock" => Ok(BackendKind::Mock),
            other => Err(BuildError::UnknownKind(other.to_string())),
        }
    }
}

/// Declarative description of a backend. `api_key_ref` names an
/// environment variable; the key itself is only read in [`build_backend`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackendSpec {
    pub kind: String,
    pub model: String,
    pub base_url: Option<String>,
    pub api_key_ref: Option<String>,
    pub script: Option<MockScript>,
}

impl BackendSpec {
    pub fn mock(script: MockScript) -> Self {
        Self {
            kind: "mock".into(),
            model: "mock".into(),
            script: Some(script),
            ..Self::default()
        }
    }

    /// Credential variable this spec resolves, after defaults.
    pub fn credential_var(&self) -> Option<String> {
        self.api_key_ref.clone().or_else(|| {
            self.kind
                .parse::<BackendKind>()
                .ok()
                .and_then(|k| k.default_key_var())
                .map(str::to_string)
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("unknown backend kind `{0}` (expected openai, groq, openai_compatible or mock)")]
    UnknownKind(String),
    #[error("missing credential: environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("backend kind `{0}` requires a base_url")]
    MissingBaseUrl(String),
    #[error("mock backend requires a script")]
    MissingScript,
    #[error("backend model must be nonempty")]
    MissingModel,
    #[error(transparent)]
    Client(#[from] BackendError),
}

/// Instantiates the backend described by `spec`, resolving its credential
/// from `env`.
pub fn build_backend(
    spec: &BackendSpec,
    env: &HashMap<String, String>,
) -> Result<Arc<dyn Backend>, BuildError> {
    let kind: BackendKind = spec.kind.parse()?;
    if kind == BackendKind::Mock {
        let script = spec.script.clone().ok_or(BuildError::MissingScript)?;
        let model = if spec.model.is_empty() { "mock" } else { &spec.model };
        return Ok(Arc::new(MockBackend::with_model(script, model)));
    }
    if spec.model.is_empty() {
        return Err(BuildError::MissingModel);
    }
    let api_key = match spec.credential_var() {
        Some(var) => Some(
            env.get(&var)
                .filter(|v| !v.is_empty())
                .cloned()
                .ok_or(BuildError::MissingCredential(var))?,
        ),
        None => None,
    };
    let base_url = match (kind, spec.base_url.as_deref()) {
        (_, Some(url)) => url.to_string(),
        (BackendKind::OpenAi, None) => OPENAI_BASE_URL.to_string(),
        (BackendKind::Groq, None) => GROQ_BASE_URL.to_string(),
        (_, None) => return Err(BuildError::MissingBaseUrl(kind.to_string())),
    };
    let backend = OpenAiCompatibleBackend::new(&base_url, spec.model.clone(), api_key)?;
    Ok(Arc::new(backend))
}
