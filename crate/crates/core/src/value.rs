//! Argument values and tool calls.
//!
//! Values mirror the JSON data model. Equality used for scoring goes through
//! [`canonicalize_value`] and [`Value::canonical_eq`]; the derived `PartialEq`
//! is plain structural equality.

use std::fmt::{self, Write as _};

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CoreError;

/// Relative tolerance used when comparing numbers.
pub const NUMBER_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Value {
    #[default]
    Null,
    Bool(bool),
    Number(f64),
    String(String),
    List(Vec<Value>),
    Map(IndexMap<String, Value>),
}

/// `|a - b| <= 1e-9 * max(1, |a|, |b|)`.
pub fn numbers_equal(a: f64, b: f64) -> bool {
    let scale = 1f64.max(a.abs()).max(b.abs());
    (a - b).abs() <= NUMBER_RTOL * scale
}

/// Normal form used for exact-match scoring: trimmed strings, `-0` folded to
/// `0`, containers canonicalized recursively. Idempotent.
pub fn canonicalize_value(v: &Value) -> Value {
    match v {
        Value::Null => Value::Null,
        Value::Bool(b) => Value::Bool(*b),
        Value::Number(n) => Value::Number(if *n == 0.0 { 0.0 } else { *n }),
        Value::String(s) => Value::String(s.trim().to_string()),
        Value::List(items) => Value::List(items.iter().map(canonicalize_value).collect()),
        Value::Map(map) => Value::Map(
            map.iter()
                .map(|(k, v)| (k.trim().to_string(), canonicalize_value(v)))
                .collect(),
        ),
    }
}

impl Value {
    pub fn canonicalize(&self) -> Value {
        canonicalize_value(self)
    }

    /// Equality after canonicalization. Numbers use the relative tolerance,
    /// lists compare in order, maps compare by key set then per key.
    pub fn canonical_eq(&self, other: &Value) -> bool {
        canonical_eq_inner(&self.canonicalize(), &other.canonicalize())
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Render as a Python literal, the syntax used inside bracket tool calls.
    pub fn to_python_literal(&self) -> String {
        let mut out = String::new();
        write_python(self, &mut out);
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Null => serde_json::Value::Null,
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Number(n) => number_to_json(*n),
            Value::String(s) => serde_json::Value::String(s.clone()),
            Value::List(items) => serde_json::Value::Array(items.iter().map(Value::to_json).collect()),
            Value::Map(map) => serde_json::Value::Object(
                map.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
        }
    }

    /// Compact JSON with object keys sorted; stable across key order, used as a lookup key.
    pub fn canonical_key(&self) -> String {
        fn sorted(v: &Value) -> serde_json::Value {
            match v {
                Value::List(items) => serde_json::Value::Array(items.iter().map(sorted).collect()),
                Value::Map(map) => {
                    let mut keys: Vec<_> = map.keys().collect();
                    keys.sort();
                    serde_json::Value::Object(
                        keys.into_iter().map(|k| (k.clone(), sorted(&map[k]))).collect(),
                    )
                }
                other => other.to_json(),
            }
        }
        sorted(&self.canonicalize()).to_string()
    }
}

fn canonical_eq_inner(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Number(x), Value::Number(y)) => numbers_equal(*x, *y),
        (Value::String(x), Value::String(y)) => x == y,
        (Value::List(x), Value::List(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| canonical_eq_inner(p, q))
        }
        (Value::Map(x), Value::Map(y)) => {
            x.len() == y.len()
                && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| canonical_eq_inner(v, w)))
        }
        _ => false,
    }
}

fn number_to_json(n: f64) -> serde_json::Value {
    if n.fract() == 0.0 && n.abs() < 9.007_199_254_740_992e15 {
        serde_json::Value::from(n as i64)
    } else {
        serde_json::Number::from_f64(n)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null)
    }
}

fn format_number(n: f64) -> String {
    number_to_json(n).to_string()
}

fn write_python(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("None"),
        Value::Bool(true) => out.push_str("True"),
        Value::Bool(false) => out.push_str("False"),
        Value::Number(n) => out.push_str(&format_number(*n)),
        Value::String(s) => write_quoted(s, out),
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_python(item, out);
            }
            out.push(']');
        }
        Value::Map(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_quoted(k, out);
                out.push_str(": ");
                write_python(item, out);
            }
            out.push('}');
        }
    }
}

fn write_quoted(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

impl From<serde_json::Value> for Value {
    fn from(v: serde_json::Value) -> Self {
        match v {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(b),
            serde_json::Value::Number(n) => Value::Number(n.as_f64().unwrap_or(f64::NAN)),
            serde_json::Value::String(s) => Value::String(s),
            serde_json::Value::Array(items) => Value::List(items.into_iter().map(Value::from).collect()),
            serde_json::Value::Object(map) => {
                Value::Map(map.into_iter().map(|(k, v)| (k, Value::from(v))).collect())
            }
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::String(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::String(s)
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Number(n)
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Number(n as f64)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl<T: Into<Value>> From<Vec<T>> for Value {
    fn from(items: Vec<T>) -> Self {
        Value::List(items.into_iter().map(Into::into).collect())
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        serde_json::Value::deserialize(deserializer).map(Value::from)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_python_literal())
    }
}

/// One parsed function invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawToolCall")]
pub struct ToolCall {
    pub name: String,
    pub args: IndexMap<String, Value>,
}

#[derive(Deserialize)]
struct RawToolCall {
    name: String,
    #[serde(default, alias = "arguments", alias = "parameters")]
    args: ArgsField,
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum ArgsField {
    #[default]
    Missing,
    Map(IndexMap<String, Value>),
    Encoded(String),
}

impl TryFrom<RawToolCall> for ToolCall {
    type Error = CoreError;

    fn try_from(raw: RawToolCall) -> Result<Self, Self::Error> {
        let args = match raw.args {
            ArgsField::Missing => IndexMap::new(),
            ArgsField::Map(m) => m,
            ArgsField::Encoded(s) if s.trim().is_empty() => IndexMap::new(),
            ArgsField::Encoded(s) => serde_json::from_str(&s)
                .map_err(|e| CoreError::InvalidArguments(format!("arguments string is not a JSON object: {e}")))?,
        };
        ToolCall::new(raw.name, args)
    }
}

impl ToolCall {
    pub fn new(name: impl Into<String>, args: IndexMap<String, Value>) -> Result<Self, CoreError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(CoreError::InvalidToolName(name));
        }
        Ok(Self { name, args })
    }

    /// Builder used by fixtures and tests. Panics on an invalid name.
    pub fn build<K, V>(name: &str, args: impl IntoIterator<Item = (K, V)>) -> Self
    where
        K: Into<String>,
        V: Into<Value>,
    {
        let args = args.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
        Self::new(name, args).expect("valid tool name")
    }

    /// `name(k=v, ...)` with Python literal values.
    pub fn to_bracket_item(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|(k, v)| format!("{k}={}", v.to_python_literal()))
            .collect();
        format!("{}({})", self.name, args.join(", "))
    }

    pub fn to_json_object(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "arguments": Value::Map(self.args.clone()).to_json(),
        })
    }
}

/// `[a(..), b(..)]`.
pub fn render_bracket_calls(calls: &[ToolCall]) -> String {
    let items: Vec<String> = calls.iter().map(ToolCall::to_bracket_item).collect();
    format!("[{}]", items.join(", "))
}

/// Names equal and canonicalized argument maps equal, ignoring key order.
pub fn tool_call_equal(a: &ToolCall, b: &ToolCall) -> bool {
    a.name == b.name
        && a.args.len() == b.args.len()
        && a.args
            .iter()
            .all(|(k, v)| b.args.get(k).is_some_and(|w| v.canonical_eq(w)))
}

impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bracket_item())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exchange(value: i64) -> ToolCall {
        ToolCall::build(
            "compute_exchange_rate",
            [
                ("base_currency", Value::from("RMB")),
                ("target_currency", Value::from("USD")),
                ("value", Value::from(value)),
            ],
        )
    }

    #[test]
    fn trims_strings() {
        assert_eq!(canonicalize_value(&Value::from(" RMB ")), Value::from("RMB"));
    }

    #[test]
    fn integer_and_float_forms_match() {
        assert!(Value::Number(50000.0).canonical_eq(&Value::from(50000i64)));
        let parsed: Value = serde_json::from_str("50000.0").unwrap();
        assert!(parsed.canonical_eq(&serde_json::from_str::<Value>("50000").unwrap()));
    }

    #[test]
    fn list_order_matters() {
        let a = Value::from(vec![1i64, 2]);
        let b = Value::from(vec![2i64, 1]);
        assert!(!a.canonical_eq(&b));
        assert!(a.canonical_eq(&Value::from(vec![1i64, 2])));
    }

    #[test]
    fn relative_tolerance() {
        assert!(numbers_equal(1e12, 1e12 + 1e2));
        assert!(!numbers_equal(1e12, 1e12 + 1e4));
        assert!(numbers_equal(0.0, 1e-10));
        assert!(!numbers_equal(0.0, 1e-8));
    }

    #[test]
    fn exchange_rate_call_equality() {
        assert!(tool_call_equal(&exchange(50000), &exchange(50000)));
        assert!(!tool_call_equal(&exchange(50000), &exchange(5000)));
    }

    #[test]
    fn key_order_is_ignored() {
        let a = ToolCall::build("f", [("a", 1i64), ("b", 2i64)]);
        let b = ToolCall::build("f", [("b", 2i64), ("a", 1i64)]);
        assert!(tool_call_equal(&a, &b));
        // oracle: sort keys then compare pairwise
        let mut ka: Vec<_> = a.args.iter().collect();
        let mut kb: Vec<_> = b.args.iter().collect();
        ka.sort_by(|x, y| x.0.cmp(y.0));
        kb.sort_by(|x, y| x.0.cmp(y.0));
        assert_eq!(ka, kb);
    }

    #[test]
    fn rejects_bad_names() {
        assert!(ToolCall::new("", IndexMap::new()).is_err());
        assert!(ToolCall::new("get time", IndexMap::new()).is_err());
    }

    #[test]
    fn deserializes_encoded_arguments() {
        let call: ToolCall = serde_json::from_str(
            r##"{"name":"return_delivered_order_items","arguments":"{\"order_id\": \"#W7181492\"}"}"##,
        )
        .unwrap();
        assert_eq!(call.args["order_id"], Value::from("#W7181492"));
        let call: ToolCall = serde_json::from_str(r#"{"name":"f","args":{"a":1}}"#).unwrap();
        assert_eq!(call.args["a"], Value::Number(1.0));
    }

    #[test]
    fn python_literal_rendering() {
        let call = ToolCall::build(
            "set_budget_limit",
            [("access_token", Value::from("abc123xyz")), ("budget_limit", Value::from(7142.86))],
        );
        assert_eq!(
            call.to_bracket_item(),
            r#"set_budget_limit(access_token="abc123xyz", budget_limit=7142.86)"#
        );
        assert_eq!(Value::from(vec![Value::Bool(true), Value::Null]).to_python_literal(), "[True, None]");
    }

    pub(crate) fn arb_value() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            (-1e6f64..1e6).prop_map(Value::Number),
            "[ a-z0-9]{0,8}".prop_map(Value::String),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
                prop::collection::vec(("[a-z ]{1,4}", inner), 0..4)
                    .prop_map(|kv| Value::Map(kv.into_iter().collect())),
            ]
        })
    }

    fn arb_call() -> impl Strategy<Value = ToolCall> {
        (
            prop::sample::select(vec!["f", "g"]),
            prop::collection::vec((prop::sample::select(vec!["a", "b", "c"]), prop_oneof![
                Just(Value::from(1i64)),
                Just(Value::from(" x")),
                Just(Value::from("x")),
                Just(Value::from(vec![1i64, 2])),
            ]), 0..3),
        )
            .prop_map(|(n, kv)| ToolCall::build(n, kv))
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent(v in arb_value()) {
            let once = canonicalize_value(&v);
            prop_assert_eq!(canonicalize_value(&once), once);
        }

        #[test]
        fn canonical_eq_is_reflexive(v in arb_value()) {
            prop_assert!(v.canonical_eq(&v));
        }

        #[test]
        fn call_equality_is_an_equivalence(a in arb_call(), b in arb_call(), c in arb_call()) {
            prop_assert!(tool_call_equal(&a, &a));
            prop_assert_eq!(tool_call_equal(&a, &b), tool_call_equal(&b, &a));
            if tool_call_equal(&a, &b) && tool_call_equal(&b, &c) {
                prop_assert!(tool_call_equal(&a, &c));
            }
        }

        #[test]
        fn json_round_trip(v in arb_value()) {
            let text = serde_json::to_string(&v).unwrap();
            let back: Value = serde_json::from_str(&text).unwrap();
            prop_assert!(back.canonical_eq(&v));
        }
    }
}
