//! Declarative YAML agent specifications.
//!
//! A document has three sections: metadata (`name`, `description`), the LLM
//! backend (`llm`) and the skill pipeline (`skills`). Skill entries are a
//! bare registered name or a map with a `skill` key plus parameters.
//! `${VAR}` references in string scalars are replaced from the supplied
//! environment; `llm.api_key` is kept as a reference and resolved only when
//! the backend is built.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use yaml_rust2::parser::{Event, MarkedEventReceiver, Parser};
use yaml_rust2::scanner::{Marker, TScalarStyle};
use yaml_rust2::Yaml;

use crate::backend::{build_backend, BackendKind, BackendSpec, BuildError, GenerationConfig, MockScript, ScriptRule};
use crate::engine::{Agent, EngineError};
use crate::registry::{RegistryError, SkillRegistry};
use crate::skill::{Params, SkillRef};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("YAML syntax error: {0}")]
    Yaml(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("environment variable `{0}` is not set")]
    MissingEnvVar(String),
    #[error("skills[{index}]: {source}")]
    Skill {
        index: usize,
        #[source]
        source: RegistryError,
    },
    #[error("llm: {0}")]
    Backend(#[from] BuildError),
    #[error(transparent)]
    Agent(#[from] EngineError),
}

impl ConfigError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// The path component of a schema error.
    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { path, .. } => Some(path),
            _ => None,
        }
    }
}

/// Replaces each `${VAR}` with `env[VAR]`. Substituted text is not
/// rescanned; `$` not followed by a well-formed reference is kept.
pub fn interpolate_env(raw: &str, env: &HashMap<String, String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find('}').map(|end| (&after[..end], end)) {
            Some((name, end)) if is_env_name(name) => {
                let value = env
                    .get(name)
                    .ok_or_else(|| ConfigError::MissingEnvVar(name.to_string()))?;
                out.push_str(value);
                rest = &after[end + 1..];
            }
            _ => {
                out.push_str("${");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn is_env_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// The variable name when `raw` is exactly one `${VAR}` reference.
fn env_reference(raw: &str) -> Option<&str> {
    raw.strip_prefix("${")
        .and_then(|r| r.strip_suffix('}'))
        .filter(|name| is_env_name(name))
}

/// Backend section: which backend to build plus config-level generation
/// overrides.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LlmConfig {
    pub backend: BackendSpec,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub top_p: Option<f64>,
}

impl LlmConfig {
    /// Defaults with this section's overrides applied.
    pub fn generation(&self) -> Result<GenerationConfig, crate::backend::BackendError> {
        let mut config = GenerationConfig::default();
        if let Some(t) = self.temperature {
            config = config.with_temperature(t)?;
        }
        if let Some(m) = self.max_tokens {
            config = config.with_max_tokens(m)?;
        }
        if let Some(p) = self.top_p {
            config = config.with_top_p(p)?;
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillEntry {
    pub skill: String,
    pub params: Params,
}

impl SkillEntry {
    pub fn new(skill: impl Into<String>) -> Self {
        Self {
            skill: skill.into(),
            params: Params::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub name: String,
    pub description: String,
    pub llm: LlmConfig,
    pub skills: Vec<SkillEntry>,
}

// ---------------------------------------------------------------------------
// YAML loading

#[derive(Debug, Clone)]
enum Node {
    Scalar { text: String, plain: bool },
    Seq(Vec<Node>),
    Map(Vec<(String, Node)>),
}

enum Frame {
    Seq(Vec<Node>),
    Map(Vec<(String, Node)>, Option<String>),
}

#[derive(Default)]
struct TreeBuilder {
    stack: Vec<Frame>,
    root: Option<Node>,
    error: Option<ConfigError>,
}

fn at(mark: &Marker) -> String {
    format!("line {} column {}", mark.line(), mark.col() + 1)
}

impl TreeBuilder {
    fn fail(&mut self, message: String) {
        if self.error.is_none() {
            self.error = Some(ConfigError::Yaml(message));
        }
    }

    fn push_node(&mut self, node: Node, mark: &Marker) {
        match self.stack.last_mut() {
            None => self.root = Some(node),
            Some(Frame::Seq(items)) => items.push(node),
            Some(Frame::Map(entries, key)) => match key.take() {
                Some(k) => {
                    if entries.iter().any(|(existing, _)| *existing == k) {
                        self.fail(format!("duplicate key `{k}` at {}", at(mark)));
                        return;
                    }
                    entries.push((k, node));
                }
                None => match node {
                    Node::Scalar { text, .. } => *key = Some(text),
                    _ => self.fail(format!("mapping keys must be scalars ({})", at(mark))),
                },
            },
        }
    }
}

impl MarkedEventReceiver for TreeBuilder {
    fn on_event(&mut self, event: Event, mark: Marker) {
        if self.error.is_some() {
            return;
        }
        let anchor_or_tag = |anchor: usize, tagged: bool| anchor > 0 || tagged;
        match event {
            Event::Alias(_) => self.fail(format!("aliases are not supported ({})", at(&mark))),
            Event::Scalar(_, _, anchor, ref tag) if anchor_or_tag(anchor, tag.is_some()) => {
                self.fail(format!("anchors and tags are not supported ({})", at(&mark)))
            }
            Event::SequenceStart(anchor, ref tag) | Event::MappingStart(anchor, ref tag)
                if anchor_or_tag(anchor, tag.is_some()) =>
            {
                self.fail(format!("anchors and tags are not supported ({})", at(&mark)))
            }
            Event::Scalar(text, style, _, _) => {
                let plain = style == TScalarStyle::Plain;
                self.push_node(Node::Scalar { text, plain }, &mark);
            }
            Event::SequenceStart(..) => self.stack.push(Frame::Seq(Vec::new())),
            Event::MappingStart(..) => self.stack.push(Frame::Map(Vec::new(), None)),
            Event::SequenceEnd | Event::MappingEnd => {
                let node = match self.stack.pop() {
                    Some(Frame::Seq(items)) => Node::Seq(items),
                    Some(Frame::Map(entries, _)) => Node::Map(entries),
                    None => return self.fail("unbalanced collection end".into()),
                };
                self.push_node(node, &mark);
            }
            Event::StreamStart
            | Event::StreamEnd
            | Event::DocumentStart
            | Event::DocumentEnd
            | Event::Nothing => {}
        }
    }
}

fn load_tree(text: &str) -> Result<Option<Node>, ConfigError> {
    let mut builder = TreeBuilder::default();
    Parser::new_from_str(text)
        .load(&mut builder, false)
        .map_err(|e| ConfigError::Yaml(e.to_string()))?;
    match builder.error {
        Some(e) => Err(e),
        None => Ok(builder.root),
    }
}

/// Interpolates and resolves a node into a [`Value`]. Plain scalars follow
/// the YAML core schema; quoted scalars are always text.
fn to_value(
    node: &Node,
    path: &str,
    env: &HashMap<String, String>,
) -> Result<Value, ConfigError> {
    match node {
        Node::Scalar { text, plain: false } => Ok(Value::Text(interpolate_env(text, env)?)),
        Node::Scalar { text, plain: true } => match Yaml::from_str(text) {
            Yaml::Null => Ok(Value::Null),
            Yaml::Boolean(b) => Ok(Value::Bool(b)),
            Yaml::Integer(i) => Ok(Value::Int(i)),
            Yaml::Real(_) => Yaml::from_str(text)
                .as_f64()
                .map(Value::Float)
                .ok_or_else(|| ConfigError::schema(path, format!("bad number `{text}`"))),
            _ => Ok(Value::Text(interpolate_env(text, env)?)),
        },
        Node::Seq(items) => items
            .iter()
            .enumerate()
            .map(|(i, item)| to_value(item, &format!("{path}[{i}]"), env))
            .collect::<Result<Vec<_>, _>>()
            .map(Value::List),
        Node::Map(entries) => entries
            .iter()
            .map(|(k, v)| Ok((k.clone(), to_value(v, &join(path, k), env)?)))
            .collect::<Result<BTreeMap<_, _>, ConfigError>>()
            .map(Value::Map),
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn expect_map<'n>(node: &'n Node, path: &str) -> Result<&'n [(String, Node)], ConfigError> {
    match node {
        Node::Map(entries) => Ok(entries),
        _ => Err(ConfigError::schema(path, "expected a mapping")),
    }
}

fn reject_unknown(entries: &[(String, Node)], allowed: &[&str], path: &str) -> Result<(), ConfigError> {
    match entries.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(ConfigError::schema(join(path, k), "unknown key")),
        None => Ok(()),
    }
}

fn lookup<'n>(entries: &'n [(String, Node)], key: &str) -> Option<&'n Node> {
    entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
}

fn text_field(
    entries: &[(String, Node)],
    key: &str,
    path: &str,
    env: &HashMap<String, String>,
) -> Result<Option<String>, ConfigError> {
    let path = join(path, key);
    match lookup(entries, key) {
        None => Ok(None),
        Some(node) => match to_value(node, &path, env)? {
            Value::Text(s) => Ok(Some(s)),
            other => Err(ConfigError::schema(path, format!("expected text, got {}", other.type_name()))),
        },
    }
}

fn number_field(
    entries: &[(String, Node)],
    key: &str,
    path: &str,
    env: &HashMap<String, String>,
) -> Result<Option<f64>, ConfigError> {
    let path = join(path, key);
    match lookup(entries, key) {
        None => Ok(None),
        Some(node) => match to_value(node, &path, env)? {
            Value::Float(f) => Ok(Some(f)),
            Value::Int(i) => Ok(Some(i as f64)),
            other => Err(ConfigError::schema(path, format!("expected a number, got {}", other.type_name()))),
        },
    }
}

fn parse_script(node: &Node, path: &str, env: &HashMap<String, String>) -> Result<MockScript, ConfigError> {
    let text = |v: Value, p: &str| match v {
        Value::Text(s) => Ok(s),
        other => Err(ConfigError::schema(p, format!("expected text, got {}", other.type_name()))),
    };
    match node {
        Node::Seq(items) => {
            let mut rules = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let p = format!("{path}[{i}]");
                let entries = expect_map(item, &p)?;
                reject_unknown(entries, &["match", "response"], &p)?;
                let field = |key: &str| -> Result<String, ConfigError> {
                    let fp = join(&p, key);
                    let node = lookup(entries, key).ok_or_else(|| ConfigError::schema(&fp, "required"))?;
                    text(to_value(node, &fp, env)?, &fp)
                };
                rules.push(ScriptRule::new(field("match")?, field("response")?));
            }
            Ok(MockScript::new(rules))
        }
        Node::Map(entries) => entries
            .iter()
            .map(|(matcher, v)| {
                let p = join(path, matcher);
                Ok(ScriptRule::new(matcher.clone(), text(to_value(v, &p, env)?, &p)?))
            })
            .collect::<Result<Vec<_>, ConfigError>>()
            .map(MockScript::new),
        Node::Scalar { .. } => Ok(MockScript::always(text(to_value(node, path, env)?, path)?)),
    }
}

const LLM_KEYS: [&str; 8] = [
    "backend",
    "model",
    "base_url",
    "api_key",
    "temperature",
    "max_tokens",
    "top_p",
    "script",
];

fn parse_llm(node: &Node, env: &HashMap<String, String>) -> Result<LlmConfig, ConfigError> {
    let path = "llm";
    let entries = expect_map(node, path)?;
    reject_unknown(entries, &LLM_KEYS, path)?;
    let kind = text_field(entries, "backend", path, env)?
        .ok_or_else(|| ConfigError::schema("llm.backend", "required"))?;
    let parsed_kind: BackendKind = kind
        .parse()
        .map_err(|e: BuildError| ConfigError::schema("llm.backend", e.to_string()))?;
    let model = text_field(entries, "model", path, env)?.unwrap_or_default();
    if model.is_empty() && parsed_kind != BackendKind::Mock {
        return Err(ConfigError::schema("llm.model", "required"));
    }
    let api_key_ref = match lookup(entries, "api_key") {
        None => None,
        Some(Node::Scalar { text, .. }) => Some(
            env_reference(text)
                .ok_or_else(|| {
                    ConfigError::schema(
                        "llm.api_key",
                        "must be an environment reference of the form ${VAR}",
                    )
                })?
                .to_string(),
        ),
        Some(_) => return Err(ConfigError::schema("llm.api_key", "expected text")),
    };
    let script = lookup(entries, "script")
        .map(|n| parse_script(n, "llm.script", env))
        .transpose()?;
    let base = GenerationConfig::default();
    let temperature = number_field(entries, "temperature", path, env)?;
    if let Some(t) = temperature {
        base.with_temperature(t)
            .map_err(|e| ConfigError::schema("llm.temperature", e.to_string()))?;
    }
    let top_p = number_field(entries, "top_p", path, env)?;
    if let Some(p) = top_p {
        base.with_top_p(p)
            .map_err(|e| ConfigError::schema("llm.top_p", e.to_string()))?;
    }
    let max_tokens = match lookup(entries, "max_tokens") {
        None => None,
        Some(n) => match to_value(n, "llm.max_tokens", env)? {
            Value::Int(i) if i > 0 && i <= u32::MAX as i64 => Some(i as u32),
            other => {
                return Err(ConfigError::schema(
                    "llm.max_tokens",
                    format!("expected a positive integer, got {other}"),
                ))
            }
        },
    };
    Ok(LlmConfig {
        backend: BackendSpec {
            kind,
            model,
            base_url: text_field(entries, "base_url", path, env)?,
            api_key_ref,
            script,
        },
        temperature,
        max_tokens,
        top_p,
    })
}

fn parse_skills(node: &Node, env: &HashMap<String, String>) -> Result<Vec<SkillEntry>, ConfigError> {
    let Node::Seq(items) = node else {
        return Err(ConfigError::schema("skills", "expected a list of skill entries"));
    };
    if items.is_empty() {
        return Err(ConfigError::schema("skills", "must list at least one skill"));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let path = format!("skills[{i}]");
            match item {
                Node::Scalar { text, .. } => match to_value(item, &path, env)? {
                    Value::Text(name) => Ok(SkillEntry::new(name)),
                    _ => Err(ConfigError::schema(
                        path,
                        format!("expected a skill name or mapping, got `{text}`"),
                    )),
                },
                Node::Map(entries) => {
                    let skill_path = format!("{path}.skill");
                    let name = match lookup(entries, "skill") {
                        None => return Err(ConfigError::schema(skill_path, "required")),
                        Some(n) => match to_value(n, &skill_path, env)? {
                            Value::Text(s) => s,
                            other => {
                                return Err(ConfigError::schema(
                                    skill_path,
                                    format!("expected a skill name, got {}", other.type_name()),
                                ))
                            }
                        },
                    };
                    let mut params = Params::new();
                    for (k, v) in entries.iter().filter(|(k, _)| k != "skill") {
                        params.insert(k.clone(), to_value(v, &join(&path, k), env)?);
                    }
                    Ok(SkillEntry { skill: name, params })
                }
                Node::Seq(_) => Err(ConfigError::schema(path, "expected a skill name or mapping, got a list")),
            }
        })
        .collect()
}

/// Parses and validates an agent document.
pub fn parse_config(text: &str, env: &HashMap<String, String>) -> Result<AgentConfig, ConfigError> {
    let root = load_tree(text)?.ok_or_else(|| ConfigError::schema("$", "empty document"))?;
    let entries = expect_map(&root, "$")?;
    reject_unknown(entries, &["name", "description", "llm", "skills"], "")?;
    let name = text_field(entries, "name", "", env)?
        .ok_or_else(|| ConfigError::schema("name", "required"))?;
    let description = text_field(entries, "description", "", env)?.unwrap_or_default();
    let llm = parse_llm(
        lookup(entries, "llm").ok_or_else(|| ConfigError::schema("llm", "required"))?,
        env,
    )?;
    let skills = parse_skills(
        lookup(entries, "skills").ok_or_else(|| ConfigError::schema("skills", "required"))?,
        env,
    )?;
    Ok(AgentConfig {
        name,
        description,
        llm,
        skills,
    })
}

/// Instantiates every skill entry in order and builds the backend.
pub fn build_agent(
    config: &AgentConfig,
    registry: &SkillRegistry,
    env: &HashMap<String, String>,
) -> Result<Agent, ConfigError> {
    let skills = config
        .skills
        .iter()
        .enumerate()
        .map(|(index, entry)| {
            registry
                .create(&entry.skill, &entry.params)
                .map(|s| s.into_ref())
                .map_err(|source| ConfigError::Skill { index, source })
        })
        .collect::<Result<Vec<SkillRef>, _>>()?;
    let backend = build_backend(&config.llm.backend, env)?;
    let generation = config
        .llm
        .generation()
        .map_err(|e| ConfigError::schema("llm", e.to_string()))?;
    Ok(Agent::new(config.name.clone(), skills, Some(backend))?.with_generation(generation))
}

// ---------------------------------------------------------------------------
// Canonical serialization

const RESERVED_PLAIN: [&str; 10] = ["true", "false", "null", "yes", "no", "on", "off", "y", "n", "inf"];

fn is_plain_safe(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z' | 'A'..='Z' | '_'))
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !RESERVED_PLAIN.contains(&s.to_ascii_lowercase().as_str())
        && !s.eq_ignore_ascii_case("infinity")
        && !s.eq_ignore_ascii_case("nan")
        && s != "_"
}

fn quote(s: &str) -> String {
    if is_plain_safe(s) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() || matches!(c, '\u{2028}' | '\u{2029}' | '\u{feff}' | '\u{fffe}' | '\u{ffff}') => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn scalar(value: &Value) -> Option<String> {
    Some(match value {
        Value::Null => "null".into(),
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) if f.is_nan() => ".nan".into(),
        Value::Float(f) if f.is_infinite() => if *f > 0.0 { ".inf" } else { "-.inf" }.into(),
        Value::Float(f) => format!("{f:?}"),
        Value::Text(s) => quote(s),
        Value::List(items) if items.is_empty() => "[]".into(),
        Value::Map(m) if m.is_empty() => "{}".into(),
        Value::Bytes(_) => value.to_canonical_json(),
        Value::List(_) | Value::Map(_) => return None,
    })
}

fn emit_entry(out: &mut String, indent: usize, key: &str, value: &Value) {
    let pad = " ".repeat(indent);
    match scalar(value) {
        Some(s) => {
            let _ = writeln!(out, "{pad}{}: {s}", quote(key));
        }
        None => {
            let _ = writeln!(out, "{pad}{}:", quote(key));
            emit_block(out, indent + 2, value);
        }
    }
}

fn emit_item(out: &mut String, indent: usize, value: &Value) {
    let pad = " ".repeat(indent);
    match scalar(value) {
        Some(s) => {
            let _ = writeln!(out, "{pad}- {s}");
        }
        None => {
            let mut nested = String::new();
            emit_block(&mut nested, indent + 2, value);
            out.push_str(&pad);
            out.push_str("- ");
            out.push_str(&nested[indent + 2..]);
        }
    }
}

fn emit_block(out: &mut String, indent: usize, value: &Value) {
    match value {
        Value::List(items) => items.iter().for_each(|v| emit_item(out, indent, v)),
        Value::Map(m) => m.iter().for_each(|(k, v)| emit_entry(out, indent, k, v)),
        other => {
            let _ = writeln!(out, "{}{}", " ".repeat(indent), scalar(other).unwrap_or_default());
        }
    }
}

/// Canonical YAML: sections in the order metadata, `llm`, `skills`; keys
/// within parameter maps sorted.
pub fn serialize_config(config: &AgentConfig) -> String {
    let mut out = String::new();
    emit_entry(&mut out, 0, "name", &Value::from(config.name.as_str()));
    emit_entry(&mut out, 0, "description", &Value::from(config.description.as_str()));

    out.push_str("llm:\n");
    let spec = &config.llm.backend;
    emit_entry(&mut out, 2, "backend", &Value::from(spec.kind.as_str()));
    emit_entry(&mut out, 2, "model", &Value::from(spec.model.as_str()));
    if let Some(url) = &spec.base_url {
        emit_entry(&mut out, 2, "base_url", &Value::from(url.as_str()));
    }
    if let Some(var) = &spec.api_key_ref {
        let _ = writeln!(out, "  api_key: {}", quote(&format!("${{{var}}}")));
    }
    if let Some(t) = config.llm.temperature {
        emit_entry(&mut out, 2, "temperature", &Value::Float(t));
    }
    if let Some(m) = config.llm.max_tokens {
        emit_entry(&mut out, 2, "max_tokens", &Value::Int(m as i64));
    }
    if let Some(p) = config.llm.top_p {
        emit_entry(&mut out, 2, "top_p", &Value::Float(p));
    }
    if let Some(script) = &spec.script {
        let rules: Vec<Value> = script
            .rules
            .iter()
            .map(|r| {
                Value::Map(BTreeMap::from([
                    ("match".to_string(), Value::from(r.matcher.as_str())),
                    ("response".to_string(), Value::from(r.response.as_str())),
                ]))
            })
            .collect();
        emit_entry(&mut out, 2, "script", &Value::List(rules));
    }

    out.push_str("skills:\n");
    for entry in &config.skills {
        if entry.params.is_empty() {
            let _ = writeln!(out, "  - {}", quote(&entry.skill));
            continue;
        }
        let _ = writeln!(out, "  - skill: {}", quote(&entry.skill));
        for (k, v) in &entry.params {
            emit_entry(&mut out, 4, k, v);
        }
    }
    out
}
