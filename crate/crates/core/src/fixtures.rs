//! Small deterministic skills for tests, examples and the overhead benchmark.

use std::sync::{Arc, Mutex};

use crate::backend::Backend;
use crate::skill::{SkillDef, SkillError};
use crate::value::{Context, Value};

/// Returns its input unchanged.
pub fn identity() -> SkillDef {
    SkillDef::builder("identity")
        .description("Returns its input unchanged")
        .behavior(|ctx: &Context, _: Option<&dyn Backend>| Ok(ctx.clone()))
        .expect("static name is valid")
}

/// Appends its own name to the list under `trace_list`.
///
/// Panics if `name` is not a valid skill name.
pub fn noop(name: &str) -> SkillDef {
    let tag = name.to_string();
    SkillDef::builder(name)
        .description("Appends its name to trace_list")
        .outputs(["trace_list"])
        .behavior(move |ctx: &Context, _: Option<&dyn Backend>| {
            let mut list = match ctx.get("trace_list") {
                Some(Value::List(items)) => items.clone(),
                _ => Vec::new(),
            };
            list.push(Value::Text(tag.clone()));
            Ok(ctx.clone().with("trace_list", list))
        })
        .expect("fixture names are valid")
}

/// Sets `key` to `value`, keeping every other entry.
pub fn constant(name: &str, key: &str, value: impl Into<Value>) -> SkillDef {
    let key_owned = key.to_string();
    let value = value.into();
    SkillDef::builder(name)
        .description("Writes a constant value")
        .outputs([key])
        .behavior(move |ctx: &Context, _: Option<&dyn Backend>| {
            Ok(ctx.clone().with(key_owned.clone(), value.clone()))
        })
        .expect("fixture names are valid")
}

/// Returns exactly the given entries, dropping the input.
pub fn emit(name: &str, out: Context) -> SkillDef {
    let keys: Vec<String> = out.keys().map(str::to_string).collect();
    SkillDef::builder(name)
        .description("Replaces the context with fixed entries")
        .outputs(keys)
        .behavior(move |_: &Context, _: Option<&dyn Backend>| Ok(out.clone()))
        .expect("fixture names are valid")
}

/// A pipeline of `count` no-op skills named `noop_1` .. `noop_{count}`.
pub fn noop_pipeline(count: usize) -> Vec<SkillDef> {
    (1..=count).map(|i| noop(&format!("noop_{i}"))).collect()
}

/// Copies the value under `from` to `to`.
pub fn copy(name: &str, from: &str, to: &str) -> SkillDef {
    let (src, dst) = (from.to_string(), to.to_string());
    SkillDef::builder(name)
        .description("Copies one key to another")
        .inputs([from])
        .outputs([to])
        .behavior(move |ctx: &Context, _: Option<&dyn Backend>| {
            let value = ctx.get(&src).cloned().ok_or_else(|| SkillError::missing(src.as_str()))?;
            Ok(ctx.clone().with(dst.clone(), value))
        })
        .expect("fixture names are valid")
}

/// Writes `name(v1,v2,...)` under `out`, where `vi` are the rendered values
/// of `inputs` in the given order.
pub fn join(name: &str, inputs: &[&str], out: &str) -> SkillDef {
    let tag = name.to_string();
    let keys: Vec<String> = inputs.iter().map(|k| k.to_string()).collect();
    let dst = out.to_string();
    SkillDef::builder(name)
        .description("Joins rendered input values")
        .inputs(inputs.iter().copied())
        .outputs([out])
        .behavior(move |ctx: &Context, _: Option<&dyn Backend>| {
            let parts = keys
                .iter()
                .map(|k| ctx.get(k).map(Value::to_string).ok_or_else(|| SkillError::missing(k.as_str())))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ctx.clone().with(dst.clone(), format!("{tag}({})", parts.join(","))))
        })
        .expect("fixture names are valid")
}

/// Shared execution log for [`recorder`] skills.
pub type ExecutionLog = Arc<Mutex<Vec<String>>>;

/// Graph-node fixture. Declares no input keys, but at run time requires
/// `done_<p>` for every `p` in `after`, failing otherwise. Writes
/// `done_<name>` = `name(v1,...)` from those values, sets `last_writer` to
/// its name, and appends its name to `log`.
pub fn recorder(name: &str, after: &[&str], requires_llm: bool, log: ExecutionLog) -> SkillDef {
    let tag = name.to_string();
    let deps: Vec<String> = after.iter().map(|p| format!("done_{p}")).collect();
    let own = format!("done_{name}");
    SkillDef::builder(name)
        .description("Records its execution and its predecessors' outputs")
        .requires_llm(requires_llm)
        .outputs([own.clone(), "last_writer".to_string()])
        .behavior(move |ctx: &Context, _: Option<&dyn Backend>| {
            log.lock().expect("log lock").push(tag.clone());
            let parts = deps
                .iter()
                .map(|k| {
                    ctx.get(k)
                        .map(Value::to_string)
                        .ok_or_else(|| SkillError::Failed(format!("`{tag}` ran before `{k}` existed")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ctx
                .clone()
                .with(own.clone(), format!("{tag}({})", parts.join(",")))
                .with("last_writer", tag.as_str()))
        })
        .expect("fixture names are valid")
}
