//! Command implementations for the `agentloom` binary.
//!
//! Every command writes results to `out` and diagnostics to `err`, and
//! returns a process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | usage, configuration or schema error |
//! | 3 | runtime or skill error (including a failed benchmark) |
//! | 4 | backend or credential error |

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use agentloom::backend::BuildError;
use agentloom::compose::GraphDocument;
use agentloom::config::{build_agent, parse_config, ConfigError};
use agentloom::engine::{measure_overhead, run_agent_with, Agent, EngineError, RunOptions};
use agentloom::fixtures;
use agentloom::skills::default_registry;
use agentloom::{Context, SkillRef, SkillRegistry, Value};
use clap::{Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

pub const BENCH_THRESHOLD_MS: f64 = 100.0;

#[derive(Debug, Parser)]
#[command(name = "agentloom", version, about = "Build and run composable LLM skill pipelines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scaffold a new agent project.
    Init {
        directory: PathBuf,
        /// Overwrite files in a nonempty directory.
        #[arg(long)]
        force: bool,
    },
    /// Run an agent configuration.
    Run {
        config: PathBuf,
        /// Seed context entry; the value is parsed as JSON, else taken as text.
        #[arg(long = "input", value_name = "KEY=VALUE")]
        inputs: Vec<String>,
        /// JSON object file merged into the initial context before --input.
        #[arg(long, value_name = "FILE")]
        input_json: Option<PathBuf>,
        /// Write the execution trace as JSON.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// Include full context snapshots in the trace.
        #[arg(long, requires = "trace")]
        snapshots: bool,
        /// Write the final context to a file instead of stdout.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// List registered skills.
    Skills {
        #[arg(long)]
        json: bool,
    },
    /// Check an agent YAML file or a graph JSON file.
    Validate { path: PathBuf },
    /// Measure orchestration overhead on a no-op pipeline.
    Bench {
        #[arg(long = "skills", default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        skills: u32,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
        runs: u32,
    },
}

/// A failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Exit code for a configuration or build error.
pub fn config_exit_code(err: &ConfigError) -> i32 {
    match err {
        ConfigError::MissingEnvVar(_)
        | ConfigError::Backend(BuildError::MissingCredential(_) | BuildError::Client(_)) => EXIT_BACKEND,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I, env: &HashMap<String, String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, &default_registry(), env, out, err),
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{rendered}")
            } else {
                write!(out, "{rendered}")
            };
            code
        }
    }
}

pub fn execute(
    cli: Cli,
    registry: &SkillRegistry,
    env: &HashMap<String, String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let result = match cli.command {
        Command::Init { directory, force } => cmd_init(&directory, force, out),
        Command::Run {
            config,
            inputs,
            input_json,
            trace,
            snapshots,
            output,
        } => cmd_run(
            &RunRequest {
                config,
                inputs,
                input_json,
                trace,
                snapshots,
                output,
            },
            registry,
            env,
            out,
        ),
        Command::Skills { json } => cmd_skills(registry, json, out),
        Command::Validate { path } => cmd_validate(&path, registry, env, out, err),
        Command::Bench { skills, runs } => cmd_bench(skills as usize, runs as usize, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn io_failure(code: i32, path: &Path, e: std::io::Error) -> Failure {
    Failure::new(code, format!("{}: {e}", path.display()))
}

fn emit(out: &mut dyn Write, text: &str) -> Outcome {
    writeln!(out, "{text}").map_err(|e| Failure::new(EXIT_RUNTIME, format!("cannot write output: {e}")))
}

// ---------------------------------------------------------------------------
// init

pub const SCAFFOLD_CONFIG: &str = r#"# Agent configuration. The mock backend answers from a fixed script, so
# this pipeline runs without credentials or network access.
#
# For a live run, switch the backend section to
#   llm:
#     backend: openai
#     model: gpt-4o-mini
#     api_key: ${OPENAI_API_KEY}
# and put `- web_scraper` at the head of the skill list (run with
# --input url=https://...).
name: news_analyzer
description: Summarizes a small set of headlines

llm:
  backend: mock
  model: mock
  temperature: 0.7
  script:
    - match: "*"
      response: "Agents and retrieval lead today's headlines."

skills:
  - skill: data_analysis
    records:
      - {title: "Agents in production", relevance: 0.9}
      - {title: "Database release notes", relevance: 0.4}
      - {title: "Retrieval benchmarks", relevance: 0.7}
    operations:
      - sort_by_relevance
      - top_k: 2
      - describe
  - skill: content_generation
    template: "Summarize these headlines in one sentence.\n\n{records}"
    max_length: 500
"#;

pub const SCAFFOLD_ENV: &str = "# Credentials referenced from agent.yaml as ${VAR}.\nOPENAI_API_KEY=\nGROQ_API_KEY=\n";

pub const SCAFFOLD_README: &str = "# Agent project

`agent.yaml` declares the agent: metadata, the LLM backend and the skill
pipeline, executed top to bottom.

    agentloom run agent.yaml
    agentloom run agent.yaml --trace trace.json
    agentloom skills

The scaffold uses the scripted mock backend. To call a real provider, set the
backend to `openai` or `groq`, reference the key as `${OPENAI_API_KEY}` (see
`.env.example`) and export the variable before running.
";

fn cmd_init(directory: &Path, force: bool, out: &mut dyn Write) -> Outcome {
    let nonempty = match fs::read_dir(directory) {
        Ok(mut entries) => entries.next().is_some(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
        Err(e) => return Err(io_failure(EXIT_RUNTIME, directory, e)),
    };
    if nonempty && !force {
        return Err(Failure::new(
            EXIT_RUNTIME,
            format!("{} is not empty (use --force to overwrite)", directory.display()),
        ));
    }
    fs::create_dir_all(directory).map_err(|e| io_failure(EXIT_RUNTIME, directory, e))?;
    for (name, body) in [
        ("agent.yaml", SCAFFOLD_CONFIG),
        ("README.md", SCAFFOLD_README),
        (".env.example", SCAFFOLD_ENV),
    ] {
        let path = directory.join(name);
        fs::write(&path, body).map_err(|e| io_failure(EXIT_RUNTIME, &path, e))?;
        emit(out, &format!("created {}", path.display()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run

struct RunRequest {
    config: PathBuf,
    inputs: Vec<String>,
    input_json: Option<PathBuf>,
    trace: Option<PathBuf>,
    snapshots: bool,
    output: Option<PathBuf>,
}

/// Parses `key=value`; the value is JSON when it parses, text otherwise.
pub fn parse_input(pair: &str) -> Result<(String, Value), String> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| format!("--input `{pair}` is not of the form KEY=VALUE"))?;
    if key.is_empty() {
        return Err(format!("--input `{pair}` has an empty key"));
    }
    let value = serde_json::from_str::<serde_json::Value>(raw)
        .ok()
        .and_then(|j| Value::from_json(&j).ok())
        .unwrap_or_else(|| Value::Text(raw.to_string()));
    Ok((key.to_string(), value))
}

fn load_agent(
    path: &Path,
    registry: &SkillRegistry,
    env: &HashMap<String, String>,
) -> Result<Agent, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(EXIT_CONFIG, path, e))?;
    let located = |e: ConfigError| Failure::new(config_exit_code(&e), format!("{}: {e}", path.display()));
    let config = parse_config(&text, env).map_err(located)?;
    build_agent(&config, registry, env).map_err(located)
}

fn initial_context(request: &RunRequest) -> Result<Context, Failure> {
    let mut context = match &request.input_json {
        None => Context::new(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(EXIT_CONFIG, path, e))?;
            Context::parse_json(&text)
                .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?
        }
    };
    for pair in &request.inputs {
        let (key, value) = parse_input(pair).map_err(|m| Failure::new(EXIT_CONFIG, m))?;
        context.insert(key, value);
    }
    Ok(context)
}

fn cmd_run(
    request: &RunRequest,
    registry: &SkillRegistry,
    env: &HashMap<String, String>,
    out: &mut dyn Write,
) -> Outcome {
    let agent = load_agent(&request.config, registry, env)?;
    let input = initial_context(request)?;
    let options = RunOptions {
        snapshots: request.snapshots,
    };
    let result = run_agent_with(&agent, input, options);
    let trace = match &result {
        Ok((_, trace)) => trace,
        Err(e) => &e.trace,
    };
    if let Some(path) = &request.trace {
        fs::write(path, trace.to_json() + "\n").map_err(|e| io_failure(EXIT_RUNTIME, path, e))?;
    }
    let context = match result {
        Ok((context, _)) => context,
        Err(e) => {
            let code = if e.source.is_backend() {
                EXIT_BACKEND
            } else {
                EXIT_RUNTIME
            };
            return Err(Failure::new(code, e.to_string()));
        }
    };
    let json = context.to_canonical_json();
    match &request.output {
        Some(path) => fs::write(path, json + "\n").map_err(|e| io_failure(EXIT_RUNTIME, path, e)),
        None => emit(out, &json),
    }
}

// ---------------------------------------------------------------------------
// skills

fn cmd_skills(registry: &SkillRegistry, json: bool, out: &mut dyn Write) -> Outcome {
    let infos = registry.list();
    if json {
        let text = serde_json::to_string_pretty(&infos).expect("skill list serializes");
        return emit(out, &text);
    }
    let width = infos
        .iter()
        .map(|i| i.name.len())
        .chain(["NAME".len()])
        .max()
        .unwrap_or(4);
    emit(out, &format!("{:<width$}  LLM  DESCRIPTION", "NAME"))?;
    for info in infos {
        let marker = if info.requires_llm { "yes" } else { "no" };
        emit(out, &format!("{:<width$}  {marker:<3}  {}", info.name, info.description))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validate

fn cmd_validate(
    path: &Path,
    registry: &SkillRegistry,
    env: &HashMap<String, String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let text = fs::read_to_string(path).map_err(|e| io_failure(EXIT_CONFIG, path, e))?;
    let located = |m: String| Failure::new(EXIT_CONFIG, format!("{}: {m}", path.display()));
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let doc = GraphDocument::parse(&text).map_err(|e| located(e.to_string()))?;
            let plan = doc.level_plan().map_err(|e| located(e.to_string()))?;
            for (id, skill) in &doc.nodes {
                if !registry.contains(skill) {
                    let _ = writeln!(err, "warning: node `{id}` names unregistered skill `{skill}`");
                }
            }
            emit(
                out,
                &format!("valid: {} nodes in {} levels", plan.node_count(), plan.levels.len()),
            )?;
            emit(out, &serde_json::to_string(&plan).expect("plan serializes"))
        }
        Some("yaml" | "yml") => {
            let config = parse_config(&text, env)
                .map_err(|e| Failure::new(config_exit_code(&e), format!("{}: {e}", path.display())))?;
            for (index, entry) in config.skills.iter().enumerate() {
                registry
                    .create(&entry.skill, &entry.params)
                    .map_err(|e| located(format!("skills[{index}]: {e}")))?;
            }
            emit(out, &format!("valid: {} skills", config.skills.len()))
        }
        _ => Err(located("expected a .yaml, .yml or .json file".into())),
    }
}

// ---------------------------------------------------------------------------
// bench

fn cmd_bench(skills: usize, runs: usize, out: &mut dyn Write) -> Outcome {
    let pipeline: Vec<SkillRef> = fixtures::noop_pipeline(skills)
        .into_iter()
        .map(|s| s.into_ref())
        .collect();
    let agent = Agent::new("bench", pipeline, None)
        .map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string()))?;
    let report = measure_overhead(&agent, &Context::new(), runs).map_err(|e| match e {
        EngineError::NoRuns => Failure::new(EXIT_CONFIG, e.to_string()),
        other => Failure::new(EXIT_RUNTIME, other.to_string()),
    })?;
    emit(out, &format!("skills: {}", report.skills))?;
    emit(out, &format!("runs: {}", report.runs))?;
    emit(out, &format!("mean_ms: {:.6}", report.mean_ms))?;
    if report.std_defined {
        emit(out, &format!("std_ms: {:.6}", report.std_ms))?;
    } else {
        emit(out, "std_ms: undefined (single run)")?;
    }
    emit(out, &format!("min_ms: {:.6}", report.min_ms))?;
    emit(out, &format!("max_ms: {:.6}", report.max_ms))?;
    let pass = report.mean_ms <= BENCH_THRESHOLD_MS;
    emit(
        out,
        &format!(
            "result: {} (mean overhead {} {BENCH_THRESHOLD_MS} ms)",
            if pass { "PASS" } else { "FAIL" },
            if pass { "<=" } else { ">" },
        ),
    )?;
    if pass {
        Ok(())
    } else {
        Err(Failure::new(EXIT_RUNTIME, "orchestration overhead above threshold"))
    }
}
