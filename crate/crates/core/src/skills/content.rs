//! Template-driven text generation.

use super::params::ParamReader;
use super::template::PromptTemplate;
use crate::backend::{generate_with_retry, Backend, RetryPolicy};
use crate::registry::{FnFactory, SkillFactory};
use crate::skill::{Params, SkillBehavior, SkillDef, SkillError};
use crate::value::Context;

pub const NAME: &str = "content_generation";
const DESCRIPTION: &str = "Renders a prompt template from the context and generates text with the LLM";
pub const DEFAULT_TEMPLATE: &str = "summarize";
pub const DEFAULT_MAX_LENGTH: u32 = 500;

struct ContentGeneration {
    template: PromptTemplate,
    max_length: u32,
    retry: RetryPolicy,
}

impl SkillBehavior for ContentGeneration {
    fn run(&self, context: &Context, llm: Option<&dyn Backend>) -> Result<Context, SkillError> {
        let llm = llm.ok_or_else(|| SkillError::BackendMissing(NAME.into()))?;
        let prompt = self.template.render(context)?;
        let config = llm.default_config().with_max_tokens(self.max_length)?;
        let outcome = generate_with_retry(llm, &prompt, &config, &self.retry)?;
        Ok(context.clone().with("generated", outcome.response.text))
    }
}

pub fn create(params: &Params) -> Result<SkillDef, String> {
    create_with_retry(params, RetryPolicy::default())
}

/// Like [`create`] with an explicit retry policy.
pub fn create_with_retry(params: &Params, retry: RetryPolicy) -> Result<SkillDef, String> {
    let mut reader = ParamReader::new(params);
    let spec = reader
        .string("template")?
        .unwrap_or_else(|| DEFAULT_TEMPLATE.to_string());
    let max_length = match reader.positive_int("max_length")? {
        None => DEFAULT_MAX_LENGTH,
        Some(n) => u32::try_from(n).map_err(|_| format!("`max_length` too large: {n}"))?,
    };
    reader.finish()?;
    let template = PromptTemplate::resolve(&spec).map_err(|e| e.to_string())?;
    SkillDef::builder(NAME)
        .description(DESCRIPTION)
        .requires_llm(true)
        .outputs(["generated"])
        .params(params.clone())
        .behavior(ContentGeneration {
            template,
            max_length,
            retry,
        })
        .map_err(|e| e.to_string())
}

pub fn factory() -> impl SkillFactory {
    FnFactory::new(DESCRIPTION, true, create)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{
        BackendError, GenerationConfig, LlmResponse, MockBackend, MockScript, Usage,
    };
    use crate::skill::{execute_skill, TemplateError};
    use crate::value::Value;
    use std::sync::Mutex;

    #[derive(Default)]
    struct Recorder {
        seen: Mutex<Vec<(String, u32)>>,
    }

    impl Backend for Recorder {
        fn generate(
            &self,
            prompt: &str,
            config: &GenerationConfig,
        ) -> Result<LlmResponse, BackendError> {
            self.seen
                .lock()
                .unwrap()
                .push((prompt.to_string(), config.max_tokens()));
            Ok(LlmResponse {
                text: "ok".into(),
                usage: Usage::new(1, 1),
                model: "recorder".into(),
            })
        }

        fn model(&self) -> &str {
            "recorder"
        }
    }

    fn params(pairs: &[(&str, Value)]) -> Params {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn summarize_with_mock() {
        let skill = create(&params(&[("template", "summarize".into())])).unwrap();
        let mock = MockBackend::new(MockScript::always("S"));
        let ctx = Context::new().with("text", "long article");
        let out = execute_skill(&skill, &ctx, Some(&mock)).unwrap();
        assert_eq!(out.get("generated"), Some(&Value::from("S")));
        assert_eq!(out.get("text"), ctx.get("text"));
    }

    #[test]
    fn max_length_sets_max_tokens() {
        let skill = create(&params(&[
            ("template", "summarize".into()),
            ("max_length", 500.into()),
        ]))
        .unwrap();
        assert_eq!(skill.params().get("max_length"), Some(&Value::Int(500)));
        let rec = Recorder::default();
        execute_skill(&skill, &Context::new().with("text", "abc"), Some(&rec)).unwrap();
        {
            let seen = rec.seen.lock().unwrap();
            assert_eq!(seen.len(), 1);
            assert_eq!(seen[0].1, 500);
            assert_eq!(seen[0].0, "Summarize the following content concisely.\n\nabc");
        }

        let short = create(&params(&[("max_length", 32.into())])).unwrap();
        execute_skill(&short, &Context::new().with("text", "abc"), Some(&rec)).unwrap();
        assert_eq!(rec.seen.lock().unwrap()[1].1, 32);
    }

    #[test]
    fn unresolved_placeholder() {
        let skill = create(&params(&[("template", "{missing}".into())])).unwrap();
        let mock = MockBackend::new(MockScript::always("x"));
        assert_eq!(
            execute_skill(&skill, &Context::new(), Some(&mock)).unwrap_err(),
            SkillError::Template(TemplateError::Unresolved("missing".into()))
        );
    }

    #[test]
    fn bad_params() {
        assert!(create(&params(&[("template", "nosuch".into())]))
            .unwrap_err()
            .contains("nosuch"));
        assert!(create(&params(&[("max_length", 0.into())])).is_err());
        assert!(create(&params(&[("tone", "dry".into())])).is_err());
    }

    #[test]
    fn requires_backend() {
        let skill = create(&Params::new()).unwrap();
        assert!(matches!(
            execute_skill(&skill, &Context::new().with("text", "a"), None),
            Err(SkillError::BackendMissing(_))
        ));
    }
}
