//! Heterogeneous values and the context map threaded through pipelines.
//!
//! A [`Context`] is an ordered map from nonempty text keys to [`Value`]s.
//! Serialization is canonical JSON with sorted keys; byte blobs are written
//! as `{"$bytes": "<base64>"}`.

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Key used to tag byte blobs in the JSON encoding.
pub const BYTES_TAG: &str = "$bytes";

/// A dynamically typed value.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Value {
    #[default]
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
    Bytes(Vec<u8>),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Numeric view of ints and floats.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&BTreeMap<String, Value>> {
        match self {
            Value::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Short type label used in error messages.
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Int(_) => "integer",
            Value::Float(_) => "float",
            Value::Text(_) => "text",
            Value::List(_) => "list",
            Value::Map(_) => "map",
            Value::Bytes(_) => "bytes",
        }
    }

    /// Converts to a `serde_json::Value`, tagging byte blobs.
    ///
    /// Non-finite floats have no JSON representation and become `null`.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match self {
            Value::Null => J::Null,
            Value::Bool(b) => J::Bool(*b),
            Value::Int(i) => J::from(*i),
            Value::Float(f) => serde_json::Number::from_f64(*f)
                .map(J::Number)
                .unwrap_or(J::Null),
            Value::Text(s) => J::String(s.clone()),
            Value::List(items) => J::Array(items.iter().map(Value::to_json).collect()),
            Value::Map(m) => J::Object(m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
            Value::Bytes(b) => {
                let mut obj = serde_json::Map::new();
                obj.insert(BYTES_TAG.to_string(), J::String(BASE64.encode(b)));
                J::Object(obj)
            }
        }
    }

    /// Inverse of [`Value::to_json`]. An object whose only key is `$bytes`
    /// with a valid base64 string decodes to [`Value::Bytes`].
    pub fn from_json(json: &serde_json::Value) -> Result<Value, ValueError> {
        use serde_json::Value as J;
        Ok(match json {
            J::Null => Value::Null,
            J::Bool(b) => Value::Bool(*b),
            J::Number(n) => match n.as_i64() {
                Some(i) => Value::Int(i),
                None => Value::Float(n.as_f64().ok_or_else(|| {
                    ValueError::Unrepresentable(n.to_string())
                })?),
            },
            J::String(s) => Value::Text(s.clone()),
            J::Array(items) => Value::List(
                items
                    .iter()
                    .map(Value::from_json)
                    .collect::<Result<_, _>>()?,
            ),
            J::Object(obj) => {
                if obj.len() == 1 {
                    if let Some(J::String(encoded)) = obj.get(BYTES_TAG) {
                        let bytes = BASE64
                            .decode(encoded)
                            .map_err(|e| ValueError::BadBytes(e.to_string()))?;
                        return Ok(Value::Bytes(bytes));
                    }
                }
                Value::Map(
                    obj.iter()
                        .map(|(k, v)| Ok((k.clone(), Value::from_json(v)?)))
                        .collect::<Result<_, ValueError>>()?,
                )
            }
        })
    }

    /// Canonical JSON text (sorted keys, compact).
    pub fn to_canonical_json(&self) -> String {
        // serde_json's default map is ordered by key, so objects come out sorted.
        self.to_json().to_string()
    }
}

impl fmt::Display for Value {
    /// Text renders raw; everything else renders as canonical JSON.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            other => f.write_str(&other.to_canonical_json()),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = serde_json::Value::deserialize(deserializer)?;
        Value::from_json(&json).map_err(D::Error::custom)
    }
}

macro_rules! impl_from {
    ($($t:ty => $variant:ident),* $(,)?) => {
        $(impl From<$t> for Value {
            fn from(v: $t) -> Self {
                Value::$variant(v.into())
            }
        })*
    };
}

impl_from! {
    bool => Bool,
    i32 => Int,
    i64 => Int,
    u32 => Int,
    f64 => Float,
    String => Text,
    &str => Text,
    Vec<u8> => Bytes,
}

impl From<Vec<Value>> for Value {
    fn from(v: Vec<Value>) -> Self {
        Value::List(v)
    }
}

impl From<BTreeMap<String, Value>> for Value {
    fn from(v: BTreeMap<String, Value>) -> Self {
        Value::Map(v)
    }
}

impl From<Context> for Value {
    fn from(ctx: Context) -> Self {
        Value::Map(ctx.entries)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValueError {
    #[error("context keys must be nonempty")]
    EmptyKey,
    #[error("expected a JSON object for a context, found {0}")]
    NotAnObject(&'static str),
    #[error("invalid base64 in byte blob: {0}")]
    BadBytes(String),
    #[error("number {0} is not representable")]
    Unrepresentable(String),
    #[error("invalid JSON: {0}")]
    Json(String),
}

/// The key/value payload passed between skills.
///
/// Equality is deep structural equality over the entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Context {
    entries: BTreeMap<String, Value>,
}

impl Context {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry, returning the previous value.
    ///
    /// Panics if `key` is empty; use [`Context::try_insert`] for untrusted keys.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<Value>) -> Option<Value> {
        let key = key.into();
        assert!(!key.is_empty(), "context keys must be nonempty");
        self.entries.insert(key, value.into())
    }

    pub fn try_insert(
        &mut self,
        key: impl Into<String>,
        value: impl Into<Value>,
    ) -> Result<Option<Value>, ValueError> {
        let key = key.into();
        if key.is_empty() {
            return Err(ValueError::EmptyKey);
        }
        Ok(self.entries.insert(key, value.into()))
    }

    /// Builder-style insert.
    pub fn with(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Right-biased union: entries of `other` replace entries of `self`.
    pub fn merged(&self, other: &Context) -> Context {
        let mut out = self.clone();
        for (k, v) in &other.entries {
            out.entries.insert(k.clone(), v.clone());
        }
        out
    }

    pub fn entries(&self) -> &BTreeMap<String, Value> {
        &self.entries
    }

    pub fn into_entries(self) -> BTreeMap<String, Value> {
        self.entries
    }

    pub fn from_entries(entries: BTreeMap<String, Value>) -> Result<Self, ValueError> {
        if entries.keys().any(String::is_empty) {
            return Err(ValueError::EmptyKey);
        }
        Ok(Self { entries })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries
                .iter()
                .map(|(k, v)| (k.clone(), v.to_json()))
                .collect(),
        )
    }

    pub fn from_json(json: &serde_json::Value) -> Result<Self, ValueError> {
        match Value::from_json(json)? {
            Value::Map(entries) => Self::from_entries(entries),
            other => Err(ValueError::NotAnObject(other.type_name())),
        }
    }

    /// Compact canonical JSON with sorted keys.
    pub fn to_canonical_json(&self) -> String {
        self.to_json().to_string()
    }

    /// Indented canonical JSON with sorted keys.
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("JSON values always serialize")
    }

    pub fn parse_json(text: &str) -> Result<Self, ValueError> {
        let json: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ValueError::Json(e.to_string()))?;
        Self::from_json(&json)
    }
}

impl<K: Into<String>, V: Into<Value>> FromIterator<(K, V)> for Context {
    /// Panics on empty keys, like [`Context::insert`].
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut ctx = Context::new();
        for (k, v) in iter {
            ctx.insert(k, v);
        }
        ctx
    }
}

impl Serialize for Context {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Context {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = serde_json::Value::deserialize(deserializer)?;
        Context::from_json(&json).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_json_sorts_keys() {
        let ctx = Context::new().with("b", 1).with("a", "x");
        assert_eq!(ctx.to_canonical_json(), r#"{"a":"x","b":1}"#);
    }

    #[test]
    fn bytes_use_tagged_base64() {
        let ctx = Context::new().with("blob", vec![0u8, 1, 2, 255]);
        assert_eq!(ctx.to_canonical_json(), r#"{"blob":{"$bytes":"AAEC/w=="}}"#);
        assert_eq!(Context::parse_json(&ctx.to_canonical_json()).unwrap(), ctx);
    }

    #[test]
    fn empty_keys_are_rejected() {
        assert_eq!(
            Context::parse_json(r#"{"": 1}"#).unwrap_err(),
            ValueError::EmptyKey
        );
        assert!(Context::new().try_insert("", 1).is_err());
        assert!(matches!(
            Context::parse_json("[1]").unwrap_err(),
            ValueError::NotAnObject("list")
        ));
    }

    #[test]
    fn merge_is_right_biased() {
        let left = Context::new().with("a", 1);
        let right = Context::new().with("a", 2).with("b", 3);
        assert_eq!(left.merged(&right), Context::new().with("a", 2).with("b", 3));
    }

    #[test]
    fn display_renders_text_raw() {
        assert_eq!(Value::from("hi").to_string(), "hi");
        assert_eq!(Value::List(vec![1.into(), "a".into()]).to_string(), r#"[1,"a"]"#);
    }

    pub(crate) fn arb_value() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            any::<i64>().prop_map(Value::Int),
            (-1e12f64..1e12).prop_map(Value::Float),
            "[a-z ]{0,8}".prop_map(Value::Text),
            proptest::collection::vec(any::<u8>(), 0..6).prop_map(Value::Bytes),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
                proptest::collection::btree_map("[a-z]{1,4}", inner, 0..4).prop_map(Value::Map),
            ]
        })
    }

    proptest! {
        #[test]
        fn json_round_trip(entries in proptest::collection::btree_map("[a-z]{1,5}", arb_value(), 0..5)) {
            let ctx = Context::from_entries(entries).unwrap();
            let back = Context::parse_json(&ctx.to_canonical_json()).unwrap();
            prop_assert_eq!(back, ctx);
        }
    }
}
