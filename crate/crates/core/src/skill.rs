//! The skill abstraction.
//!
//! A skill is a named capability with a description, a flag saying whether
//! it needs an LLM backend, the context keys it requires, the keys it
//! guarantees to produce, and an execution behavior mapping a context (and
//! optionally a backend) to a new context. [`execute_skill`] is the checked
//! entry point: it validates the input contract, withholds the backend from
//! skills that do not declare a need for one, and verifies the output
//! contract.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::backend::{Backend, BackendError};
use crate::value::{Context, Value};

/// Ordered set of context keys.
pub type KeySet = BTreeSet<String>;

/// Skill construction parameters.
pub type Params = BTreeMap<String, Value>;

/// Shared handle to any skill, leaf or composite.
pub type SkillRef = Arc<dyn Skill>;

pub fn key_set<I, S>(keys: I) -> KeySet
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    keys.into_iter().map(Into::into).collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unresolved placeholder `{0}`")]
    Unresolved(String),
    #[error("unterminated placeholder starting at byte {0}")]
    Unterminated(usize),
}

/// Failure of a skill execution.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SkillError {
    #[error("input `{key}`: {detail}")]
    Input { key: String, detail: String },
    #[error("skill `{skill}` did not produce declared output key `{key}`")]
    Contract { skill: String, key: String },
    #[error("skill `{0}` requires an LLM backend but none was supplied")]
    BackendMissing(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("network error fetching {url}: {message}")]
    Network { url: String, message: String },
    #[error("HTTP {status} from {url}")]
    Http { status: u16, url: String },
    #[error("response body exceeds {limit} bytes")]
    Oversize { limit: usize },
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("field `{field}`: {detail}")]
    Field { field: String, detail: String },
    #[error("feed parse error: {0}")]
    FeedParse(String),
    #[error("state file error: {0}")]
    State(String),
    #[error("response {0:?} is not one of the expected labels")]
    Label(String),
    #[error("{0}")]
    Failed(String),
}

impl SkillError {
    pub fn missing(key: impl Into<String>) -> Self {
        SkillError::Input {
            key: key.into(),
            detail: "missing".into(),
        }
    }

    pub fn invalid(key: impl Into<String>, detail: impl Into<String>) -> Self {
        SkillError::Input {
            key: key.into(),
            detail: detail.into(),
        }
    }

    pub fn field(field: impl Into<String>, detail: impl Into<String>) -> Self {
        SkillError::Field {
            field: field.into(),
            detail: detail.into(),
        }
    }

    /// True for failures originating in the LLM backend.
    pub fn is_backend(&self) -> bool {
        matches!(self, SkillError::Backend(_) | SkillError::BackendMissing(_))
    }
}

/// Anything executable as a pipeline step.
///
/// `execute` is the raw behavior; callers normally go through
/// [`execute_skill`], which enforces the declared contract.
pub trait Skill: Send + Sync {
    fn name(&self) -> &str;
    fn description(&self) -> &str;
    fn requires_llm(&self) -> bool;
    fn input_keys(&self) -> &KeySet;
    fn output_keys(&self) -> &KeySet;
    fn execute(&self, context: &Context, llm: Option<&dyn Backend>)
        -> Result<Context, SkillError>;

    /// Structural rendering, e.g. `seq(a, par(b, c))` for composites.
    fn expression(&self) -> String {
        self.name().to_string()
    }
}

impl fmt::Debug for dyn Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expression())
    }
}

/// Execution behavior of a leaf skill.
pub trait SkillBehavior: Send + Sync {
    fn run(&self, context: &Context, llm: Option<&dyn Backend>) -> Result<Context, SkillError>;
}

impl<F> SkillBehavior for F
where
    F: Fn(&Context, Option<&dyn Backend>) -> Result<Context, SkillError> + Send + Sync,
{
    fn run(&self, context: &Context, llm: Option<&dyn Backend>) -> Result<Context, SkillError> {
        self(context, llm)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid skill name `{0}`: must match [a-z][a-z0-9_]*")]
pub struct BadName(pub String);

pub fn validate_skill_name(name: &str) -> Result<(), BadName> {
    let mut chars = name.chars();
    let ok = matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'));
    if ok {
        Ok(())
    } else {
        Err(BadName(name.to_string()))
    }
}

/// A leaf skill.
#[derive(Clone)]
pub struct SkillDef {
    name: String,
    description: String,
    requires_llm: bool,
    input_keys: KeySet,
    output_keys: KeySet,
    params: Params,
    behavior: Arc<dyn SkillBehavior>,
}

impl fmt::Debug for SkillDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SkillDef")
            .field("name", &self.name)
            .field("requires_llm", &self.requires_llm)
            .field("input_keys", &self.input_keys)
            .field("output_keys", &self.output_keys)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl SkillDef {
    pub fn builder(name: impl Into<String>) -> SkillDefBuilder {
        SkillDefBuilder {
            name: name.into(),
            description: String::new(),
            requires_llm: false,
            input_keys: KeySet::new(),
            output_keys: KeySet::new(),
            params: Params::new(),
        }
    }

    /// Parameters the skill was configured with.
    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Same skill under a different (validated) name.
    pub fn with_name(mut self, name: impl Into<String>) -> Result<Self, BadName> {
        let name = name.into();
        validate_skill_name(&name)?;
        self.name = name;
        Ok(self)
    }

    pub fn into_ref(self) -> SkillRef {
        Arc::new(self)
    }
}

impl Skill for SkillDef {
    fn name(&self) -> &str {
        &self.name
    }

    fn description(&self) -> &str {
        &self.description
    }

    fn requires_llm(&self) -> bool {
        self.requires_llm
    }

    fn input_keys(&self) -> &KeySet {
        &self.input_keys
    }

    fn output_keys(&self) -> &KeySet {
        &self.output_keys
    }

    fn execute(
        &self,
        context: &Context,
        llm: Option<&dyn Backend>,
    ) -> Result<Context, SkillError> {
        self.behavior.run(context, llm)
    }
}

pub struct SkillDefBuilder {
    name: String,
    description: String,
    requires_llm: bool,
    input_keys: KeySet,
    output_keys: KeySet,
    params: Params,
}

impl SkillDefBuilder {
    pub fn description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn requires_llm(mut self, requires_llm: bool) -> Self {
        self.requires_llm = requires_llm;
        self
    }

    pub fn inputs<I, S>(mut self, keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.input_keys = key_set(keys);
        self
    }

    pub fn outputs<I, S>(mut self, keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.output_keys = key_set(keys);
        self
    }

    pub fn params(mut self, params: Params) -> Self {
        self.params = params;
        self
    }

    pub fn behavior(self, behavior: impl SkillBehavior + 'static) -> Result<SkillDef, BadName> {
        self.behavior_arc(Arc::new(behavior))
    }

    pub fn behavior_arc(self, behavior: Arc<dyn SkillBehavior>) -> Result<SkillDef, BadName> {
        validate_skill_name(&self.name)?;
        Ok(SkillDef {
            name: self.name,
            description: self.description,
            requires_llm: self.requires_llm,
            input_keys: self.input_keys,
            output_keys: self.output_keys,
            params: self.params,
            behavior,
        })
    }
}

/// Executes `skill` with contract checks.
///
/// The input context is borrowed immutably; the result is a fresh context.
/// A backend passed for a skill that does not require one is withheld.
pub fn execute_skill(
    skill: &dyn Skill,
    context: &Context,
    backend: Option<&dyn Backend>,
) -> Result<Context, SkillError> {
    execute_skill_timed(skill, context, backend).0
}

/// Like [`execute_skill`], also returning the time spent inside the skill's
/// own behavior (contract checks excluded).
pub fn execute_skill_timed(
    skill: &dyn Skill,
    context: &Context,
    backend: Option<&dyn Backend>,
) -> (Result<Context, SkillError>, Duration) {
    if let Some(key) = skill.input_keys().iter().find(|k| !context.contains_key(k)) {
        return (Err(SkillError::missing(key.as_str())), Duration::ZERO);
    }
    let llm = if skill.requires_llm() {
        match backend {
            Some(b) => Some(b),
            None => {
                return (
                    Err(SkillError::BackendMissing(skill.name().to_string())),
                    Duration::ZERO,
                )
            }
        }
    } else {
        None
    };
    let start = Instant::now();
    let result = skill.execute(context, llm);
    let elapsed = start.elapsed();
    let checked = result.and_then(|out| {
        match skill.output_keys().iter().find(|k| !out.contains_key(k)) {
            Some(key) => Err(SkillError::Contract {
                skill: skill.name().to_string(),
                key: key.clone(),
            }),
            None => Ok(out),
        }
    });
    (checked, elapsed)
}
