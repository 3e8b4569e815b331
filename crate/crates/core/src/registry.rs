//! Name-to-factory table used to discover skills and instantiate them from
//! configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::skill::{validate_skill_name, BadName, Params, SkillDef};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("skill `{0}` is already registered")]
    DuplicateSkill(String),
    #[error(transparent)]
    BadName(#[from] BadName),
    #[error("unknown skill `{name}` (known: {})", known.join(", "))]
    UnknownSkill { name: String, known: Vec<String> },
    #[error("invalid parameters for `{skill}`: {message}")]
    InvalidParams { skill: String, message: String },
}

/// Builds configured skill instances.
pub trait SkillFactory: Send + Sync {
    fn description(&self) -> &str;
    fn requires_llm(&self) -> bool;
    /// Builds a skill from parameters. Errors are human-readable messages.
    fn create(&self, params: &Params) -> Result<SkillDef, String>;
}

/// Factory backed by a closure.
pub struct FnFactory<F> {
    description: String,
    requires_llm: bool,
    build: F,
}

impl<F> FnFactory<F>
where
    F: Fn(&Params) -> Result<SkillDef, String> + Send + Sync,
{
    pub fn new(description: impl Into<String>, requires_llm: bool, build: F) -> Self {
        Self {
            description: description.into(),
            requires_llm,
            build,
        }
    }
}

impl<F> SkillFactory for FnFactory<F>
where
    F: Fn(&Params) -> Result<SkillDef, String> + Send + Sync,
{
    fn description(&self) -> &str {
        &self.description
    }

    fn requires_llm(&self) -> bool {
        self.requires_llm
    }

    fn create(&self, params: &Params) -> Result<SkillDef, String> {
        (self.build)(params)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkillInfo {
    pub name: String,
    pub description: String,
    pub requires_llm: bool,
}

#[derive(Default, Clone)]
pub struct SkillRegistry {
    factories: BTreeMap<String, Arc<dyn SkillFactory>>,
}

impl fmt::Debug for SkillRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl SkillRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl SkillFactory + 'static,
        overwrite: bool,
    ) -> Result<(), RegistryError> {
        self.register_arc(name, Arc::new(factory), overwrite)
    }

    pub fn register_arc(
        &mut self,
        name: &str,
        factory: Arc<dyn SkillFactory>,
        overwrite: bool,
    ) -> Result<(), RegistryError> {
        validate_skill_name(name)?;
        if !overwrite && self.factories.contains_key(name) {
            return Err(RegistryError::DuplicateSkill(name.to_string()));
        }
        self.factories.insert(name.to_string(), factory);
        Ok(())
    }

    /// Instantiates `name` with `params`. The resulting skill always carries
    /// the registered name.
    pub fn create(&self, name: &str, params: &Params) -> Result<SkillDef, RegistryError> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| RegistryError::UnknownSkill {
                name: name.to_string(),
                known: self.factories.keys().cloned().collect(),
            })?;
        let skill = factory
            .create(params)
            .map_err(|message| RegistryError::InvalidParams {
                skill: name.to_string(),
                message,
            })?;
        Ok(skill.with_name(name)?)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    /// Registered skills sorted by name.
    pub fn list(&self) -> Vec<SkillInfo> {
        self.factories
            .iter()
            .map(|(name, f)| SkillInfo {
                name: name.clone(),
                description: f.description().to_string(),
                requires_llm: f.requires_llm(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.factories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factories.is_empty()
    }
}
