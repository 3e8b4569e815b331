use std::collections::BTreeSet;

use crate::skill::Params;
use crate::value::Value;

/// Typed access to factory parameters that rejects unknown keys on `finish`.
pub(crate) struct ParamReader<'a> {
    params: &'a Params,
    seen: BTreeSet<&'a str>,
}

impl<'a> ParamReader<'a> {
    pub fn new(params: &'a Params) -> Self {
        Self {
            params,
            seen: BTreeSet::new(),
        }
    }

    pub fn raw(&mut self, key: &'a str) -> Option<&'a Value> {
        self.seen.insert(key);
        self.params.get(key).filter(|v| !v.is_null())
    }

    pub fn string(&mut self, key: &'a str) -> Result<Option<String>, String> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Text(s)) => Ok(Some(s.clone())),
            Some(other) => Err(format!("`{key}` must be text, got {}", other.type_name())),
        }
    }

    pub fn positive_int(&mut self, key: &'a str) -> Result<Option<u64>, String> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Int(i)) if *i > 0 => Ok(Some(*i as u64)),
            Some(other) => Err(format!("`{key}` must be a positive integer, got {other}")),
        }
    }

    /// A list of text values; a single text value counts as a one-item list.
    pub fn string_list(&mut self, key: &'a str) -> Result<Option<Vec<String>>, String> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Text(s)) => Ok(Some(vec![s.clone()])),
            Some(Value::List(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Text(s) => Ok(s.clone()),
                    other => Err(format!("`{key}` items must be text, got {}", other.type_name())),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(other) => Err(format!("`{key}` must be a list of text, got {}", other.type_name())),
        }
    }

    pub fn finish(self) -> Result<(), String> {
        let unknown: Vec<&str> = self
            .params
            .keys()
            .map(String::as_str)
            .filter(|k| !self.seen.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(format!("unknown parameter(s): {}", unknown.join(", ")))
        }
    }
}
