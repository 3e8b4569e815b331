//! Sentiment labelling through the LLM, validated against a closed label set.

use super::params::ParamReader;
use crate::backend::{generate_with_retry, Backend, RetryPolicy};
use crate::registry::{FnFactory, SkillFactory};
use crate::skill::{Params, SkillBehavior, SkillDef, SkillError};
use crate::value::Context;

pub const NAME: &str = "sentiment_analysis";
const DESCRIPTION: &str = "Analyzes text sentiment";
pub const LABELS: [&str; 3] = ["positive", "negative", "neutral"];

pub fn prompt(text: &str) -> String {
    format!("Analyze the sentiment of:\n\"{text}\"\nRespond with: positive, negative, or neutral.")
}

fn reask_prompt(text: &str) -> String {
    format!(
        "{}\nAnswer with exactly one word: positive, negative, or neutral.",
        prompt(text)
    )
}

/// Trims, lowercases and drops trailing `.`/`!`, then matches a label.
pub fn normalize_label(response: &str) -> Option<&'static str> {
    let cleaned = response
        .trim()
        .to_lowercase()
        .trim_end_matches(['.', '!'])
        .trim()
        .to_string();
    LABELS.iter().copied().find(|l| *l == cleaned)
}

struct Sentiment {
    retry: RetryPolicy,
}

impl SkillBehavior for Sentiment {
    fn run(&self, context: &Context, llm: Option<&dyn Backend>) -> Result<Context, SkillError> {
        let llm = llm.ok_or_else(|| SkillError::BackendMissing(NAME.into()))?;
        let text = context
            .get("text")
            .ok_or_else(|| SkillError::missing("text"))?
            .as_str()
            .ok_or_else(|| SkillError::invalid("text", "must be text"))?;
        if text.trim().is_empty() {
            return Err(SkillError::invalid("text", "empty"));
        }
        let config = llm.default_config();
        let mut last = String::new();
        for ask in [prompt(text), reask_prompt(text)] {
            let outcome = generate_with_retry(llm, &ask, &config, &self.retry)?;
            if let Some(label) = normalize_label(&outcome.response.text) {
                return Ok(context.clone().with("sentiment", label));
            }
            last = outcome.response.text;
        }
        Err(SkillError::Label(last))
    }
}

pub fn create(params: &Params) -> Result<SkillDef, String> {
    create_with_retry(params, RetryPolicy::default())
}

pub fn create_with_retry(params: &Params, retry: RetryPolicy) -> Result<SkillDef, String> {
    ParamReader::new(params).finish()?;
    SkillDef::builder(NAME)
        .description(DESCRIPTION)
        .requires_llm(true)
        .inputs(["text"])
        .outputs(["sentiment"])
        .params(params.clone())
        .behavior(Sentiment { retry })
        .map_err(|e| e.to_string())
}

pub fn factory() -> impl SkillFactory {
    FnFactory::new(DESCRIPTION, true, create)
}
