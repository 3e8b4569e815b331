//! Sequential pipeline execution with per-step tracing.
//!
//! The context threads through the agent's skills in order. Skills that
//! declare `requires_llm` receive the agent's backend (wrapped to meter
//! usage and to carry the agent's generation defaults); others receive
//! none. Execution stops at the first failing step.

use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use crate::backend::{Backend, GenerationConfig, MeteredBackend, UsageMeter, WithDefaults};
use crate::skill::{execute_skill_timed, SkillError, SkillRef};
use crate::value::{Context, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("skill `{0}` requires an LLM backend but the agent has none")]
    MissingBackend(String),
    #[error("runs must be at least 1")]
    NoRuns,
    #[error(transparent)]
    Run(#[from] Box<RunError>),
}

/// A failed run: the failing step, its error and the trace up to and
/// including that step.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("step {step_index} (`{skill_name}`) failed: {source}")]
pub struct RunError {
    pub step_index: usize,
    pub skill_name: String,
    #[source]
    pub source: SkillError,
    pub trace: ExecutionTrace,
}

/// An ordered skill list plus the backend serving its LLM steps.
#[derive(Clone)]
pub struct Agent {
    name: String,
    skills: Vec<SkillRef>,
    backend: Option<Arc<dyn Backend>>,
    generation: GenerationConfig,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("name", &self.name)
            .field("skills", &self.skills)
            .field("backend", &self.backend.as_ref().map(|b| b.model().to_string()))
            .field("generation", &self.generation)
            .finish()
    }
}

impl Agent {
    pub fn new(
        name: impl Into<String>,
        skills: Vec<SkillRef>,
        backend: Option<Arc<dyn Backend>>,
    ) -> Result<Self, EngineError> {
        if backend.is_none() {
            if let Some(s) = skills.iter().find(|s| s.requires_llm()) {
                return Err(EngineError::MissingBackend(s.name().to_string()));
            }
        }
        let generation = backend
            .as_ref()
            .map(|b| b.default_config())
            .unwrap_or_default();
        Ok(Self {
            name: name.into(),
            skills,
            backend,
            generation,
        })
    }

    pub fn with_generation(mut self, generation: GenerationConfig) -> Self {
        self.generation = generation;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn skills(&self) -> &[SkillRef] {
        &self.skills
    }

    pub fn backend(&self) -> Option<&Arc<dyn Backend>> {
        self.backend.as_ref()
    }

    pub fn generation(&self) -> GenerationConfig {
        self.generation
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record the full output context of every successful step.
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub index: usize,
    pub skill_name: String,
    pub started_at: String,
    /// Offsets from the start of the run, monotonic clock.
    pub start_ms: f64,
    pub end_ms: f64,
    /// Time inside the skill's behavior.
    pub skill_ms: f64,
    /// Keys added or changed by this step, sorted.
    pub produced_keys: Vec<String>,
    pub context_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TraceTotals {
    pub wall_time_ms: f64,
    pub skill_time_sum_ms: f64,
    /// Wall time minus summed in-skill time.
    pub overhead_ms: f64,
    pub llm_calls: u64,
    pub failed_llm_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub token_usage_sum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionTrace {
    pub agent: String,
    pub started_at: String,
    pub finished_at: String,
    pub steps: Vec<StepRecord>,
    pub totals: TraceTotals,
}

impl ExecutionTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

fn iso(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

fn produced_keys(before: &Context, after: &Context) -> Vec<String> {
    after
        .iter()
        .filter(|(k, v)| before.get(k) != Some(*v))
        .map(|(k, _)| k.to_string())
        .collect()
}

pub fn run_agent(agent: &Agent, input: Context) -> Result<(Context, ExecutionTrace), Box<RunError>> {
    run_agent_with(agent, input, RunOptions::default())
}

pub fn run_agent_with(
    agent: &Agent,
    input: Context,
    options: RunOptions,
) -> Result<(Context, ExecutionTrace), Box<RunError>> {
    let meter = UsageMeter::new();
    let metered = agent
        .backend
        .as_deref()
        .map(|b| MeteredBackend::new(b, &meter));
    let llm = metered
        .as_ref()
        .map(|m| WithDefaults::new(m, agent.generation));
    let llm_ref: Option<&dyn Backend> = llm.as_ref().map(|b| b as &dyn Backend);

    let started_at = Utc::now();
    let run_start = Instant::now();
    let mut steps = Vec::with_capacity(agent.skills.len());
    let mut skill_time = Duration::ZERO;
    let mut context = input;
    let mut failure = None;

    for (index, skill) in agent.skills.iter().enumerate() {
        tracing::debug!(step = index, skill = skill.name(), keys = context.len(), "executing skill");
        let step_started = Utc::now();
        let start = run_start.elapsed();
        let backend = if skill.requires_llm() { llm_ref } else { None };
        let (result, inside) = execute_skill_timed(skill.as_ref(), &context, backend);
        let end = run_start.elapsed();
        skill_time += inside;
        let mut record = StepRecord {
            index,
            skill_name: skill.name().to_string(),
            started_at: iso(step_started),
            start_ms: ms(start),
            end_ms: ms(end),
            skill_ms: ms(inside),
            produced_keys: Vec::new(),
            context_size: context.len(),
            error: None,
            snapshot: None,
        };
        match result {
            Ok(next) => {
                record.produced_keys = produced_keys(&context, &next);
                record.context_size = next.len();
                if options.snapshots {
                    record.snapshot = Some(Value::from(next.clone()));
                }
                steps.push(record);
                context = next;
            }
            Err(err) => {
                tracing::debug!(step = index, skill = skill.name(), error = %err, "skill failed");
                record.error = Some(err.to_string());
                steps.push(record);
                failure = Some((index, skill.name().to_string(), err));
                break;
            }
        }
    }

    let wall = run_start.elapsed();
    let trace = ExecutionTrace {
        agent: agent.name.clone(),
        started_at: iso(started_at),
        finished_at: iso(Utc::now()),
        steps,
        totals: TraceTotals {
            wall_time_ms: ms(wall),
            skill_time_sum_ms: ms(skill_time),
            overhead_ms: ms(wall.saturating_sub(skill_time)),
            llm_calls: meter.calls(),
            failed_llm_calls: meter.failed_calls(),
            prompt_tokens: meter.prompt_tokens(),
            completion_tokens: meter.completion_tokens(),
            token_usage_sum: meter.total_tokens(),
        },
    };
    match failure {
        None => Ok((context, trace)),
        Some((step_index, skill_name, source)) => Err(Box::new(RunError {
            step_index,
            skill_name,
            source,
            trace,
        })),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadReport {
    pub runs: usize,
    pub skills: usize,
    pub mean_ms: f64,
    /// Sample standard deviation; reported as 0 when `std_defined` is false.
    pub std_ms: f64,
    pub std_defined: bool,
    pub min_ms: f64,
    pub max_ms: f64,
    pub per_run_ms: Vec<f64>,
}

impl OverheadReport {
    fn from_samples(skills: usize, samples: Vec<f64>) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self {
            runs: n,
            skills,
            mean_ms: mean,
            std_ms: std.unwrap_or(0.0),
            std_defined: std.is_some(),
            min_ms: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max_ms: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            per_run_ms: samples,
        }
    }
}

/// Runs the agent `runs` times on clones of `input` and aggregates the
/// per-run orchestration overhead.
pub fn measure_overhead(agent: &Agent, input: &Context, runs: usize) -> Result<OverheadReport, EngineError> {
    if runs == 0 {
        return Err(EngineError::NoRuns);
    }
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let (_, trace) = run_agent(agent, input.clone())?;
        samples.push(trace.totals.overhead_ms);
    }
    Ok(OverheadReport::from_samples(agent.skills.len(), samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockScript};
    use crate::compose::seq_all;
    use crate::fixtures;
    use crate::skill::{execute_skill, SkillDef};
    use crate::skills::sentiment;

    fn refs(skills: Vec<SkillDef>) -> Vec<SkillRef> {
        skills.into_iter().map(SkillDef::into_ref).collect()
    }

    fn agent(skills: Vec<SkillRef>) -> Agent {
        Agent::new("test", skills, None).unwrap()
    }

    #[test]
    fn empty_pipeline_is_identity() {
        let input = Context::new().with("a", 1);
        let (out, trace) = run_agent(&agent(vec![]), input.clone()).unwrap();
        assert_eq!(out, input);
        assert!(trace.steps.is_empty());
        assert_eq!(trace.totals.llm_calls, 0);
    }

    #[test]
    fn noop_steps_traced() {
        let a = agent(refs(fixtures::noop_pipeline(3)));
        let (out, trace) = run_agent(&a, Context::new()).unwrap();
        assert_eq!(trace.steps.len(), 3);
        assert!(trace.totals.overhead_ms < 100.0);
        assert!(trace.totals.overhead_ms >= 0.0);
        assert_eq!(trace.steps[0].produced_keys, ["trace_list"]);
        assert_eq!(
            out.get("trace_list"),
            Some(&Value::List(vec!["noop_1".into(), "noop_2".into(), "noop_3".into()]))
        );
        for w in trace.steps.windows(2) {
            assert!(w[0].end_ms <= w[1].start_ms);
        }
    }

    #[test]
    fn fail_fast_with_partial_trace() {
        let needs_x: SkillRef = SkillDef::builder("needs_x")
            .inputs(["x"])
            .behavior(|c: &Context, _: Option<&dyn Backend>| Ok(c.clone()))
            .unwrap()
            .into_ref();
        let never: SkillRef = fixtures::noop("never").into_ref();
        let a = agent(vec![fixtures::noop("first").into_ref(), needs_x, never]);
        let err = run_agent(&a, Context::new()).unwrap_err();
        assert_eq!(err.step_index, 1);
        assert_eq!(err.skill_name, "needs_x");
        assert_eq!(err.source, SkillError::missing("x"));
        assert_eq!(err.trace.steps.len(), 2);
        assert!(err.trace.steps[0].error.is_none());
        assert!(err.trace.steps[1].error.is_some());
    }

    #[test]
    fn matches_sequential_composite() {
        let skills = refs(fixtures::noop_pipeline(4));
        let composite = seq_all(skills.clone()).unwrap();
        let input = Context::new().with("seed", "s");
        let (out, _) = run_agent(&agent(skills), input.clone()).unwrap();
        assert_eq!(out, execute_skill(&composite, &input, None).unwrap());
    }

    #[test]
    fn backend_only_reaches_llm_skills() {
        let probe: SkillRef = SkillDef::builder("probe")
            .outputs(["saw_backend"])
            .behavior(|c: &Context, llm: Option<&dyn Backend>| {
                Ok(c.clone().with("saw_backend", llm.is_some()))
            })
            .unwrap()
            .into_ref();
        let mock: Arc<dyn Backend> = Arc::new(MockBackend::new(MockScript::always("positive")));
        let senti = sentiment::create(&Default::default()).unwrap().into_ref();
        let a = Agent::new("t", vec![probe, senti], Some(mock)).unwrap();
        let (out, trace) = run_agent(&a, Context::new().with("text", "fine day")).unwrap();
        assert_eq!(out.get("saw_backend"), Some(&Value::Bool(false)));
        assert_eq!(out.get("sentiment"), Some(&Value::from("positive")));
        assert_eq!(trace.totals.llm_calls, 1);
        let prompt = sentiment::prompt("fine day");
        let expected = crate::backend::estimate_tokens(&prompt) + 1;
        assert_eq!(trace.totals.token_usage_sum, expected);
    }

    #[test]
    fn agent_requires_backend_for_llm_skills() {
        let senti = sentiment::create(&Default::default()).unwrap().into_ref();
        assert_eq!(
            Agent::new("t", vec![senti], None).unwrap_err(),
            EngineError::MissingBackend("sentiment_analysis".into())
        );
    }

    #[test]
    fn snapshots_behind_option() {
        let a = agent(refs(fixtures::noop_pipeline(2)));
        let (_, plain) = run_agent(&a, Context::new()).unwrap();
        assert!(plain.steps.iter().all(|s| s.snapshot.is_none()));
        assert!(!plain.to_json().contains("snapshot"));
        let (out, full) = run_agent_with(&a, Context::new(), RunOptions { snapshots: true }).unwrap();
        assert_eq!(full.steps[1].snapshot, Some(Value::from(out)));
    }

    #[test]
    fn overhead_report() {
        let a = agent(refs(fixtures::noop_pipeline(10)));
        let report = measure_overhead(&a, &Context::new(), 5).unwrap();
        assert_eq!(report.per_run_ms.len(), 5);
        assert!(report.std_defined);
        assert!(report.mean_ms < 100.0);
        assert!(report.min_ms <= report.mean_ms && report.mean_ms <= report.max_ms);
        let single = measure_overhead(&a, &Context::new(), 1).unwrap();
        assert!(!single.std_defined);
        assert_eq!(single.std_ms, 0.0);
        assert_eq!(measure_overhead(&a, &Context::new(), 0).unwrap_err(), EngineError::NoRuns);
    }
}
