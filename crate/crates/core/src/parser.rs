//! Raw model output → [`Trajectory`].
//!
//! The think block is the text between the first `<think>` and the next
//! `</think>`. One framing newline on each side of the reasoning and up to two
//! newlines before the answer are stripped, so that
//! [`Trajectory::render`] followed by [`parse_output`] is lossless.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::BehaviorLexicon;
use crate::types::{BehaviorCategory, Thought, Trajectory};
use crate::value::{ToolCall, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CallSyntax {
    /// `[name(k=v, ...), ...]`
    BracketPython,
    /// `{"name": ..., "arguments": ...}` or an array of such objects.
    JsonObject,
}

#[derive(Debug, Clone)]
pub struct ParseConfig {
    pub call_syntaxes: BTreeSet<CallSyntax>,
    pub think_open: String,
    pub think_close: String,
    pub lexicon: BehaviorLexicon,
}

impl Default for ParseConfig {
    fn default() -> Self {
        Self {
            call_syntaxes: [CallSyntax::BracketPython, CallSyntax::JsonObject].into_iter().collect(),
            think_open: "<think>".into(),
            think_close: "</think>".into(),
            lexicon: BehaviorLexicon::default(),
        }
    }
}

impl ParseConfig {
    pub fn validate(&self) -> Result<(), ParseError> {
        if self.call_syntaxes.is_empty() {
            return Err(ParseError::NoSyntax);
        }
        if self.think_open.is_empty() || self.think_close.is_empty() {
            return Err(ParseError::EmptyTag);
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("empty model output")]
    EmptyInput,
    #[error("at least one call syntax must be enabled")]
    NoSyntax,
    #[error("think tags must be non-empty")]
    EmptyTag,
}

/// Recoverable problems found while parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    UnbalancedThinkTags,
    MalformedCall { position: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub trajectory: Trajectory,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CallExtraction {
    pub calls: Vec<ToolCall>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse_output(raw: &str, cfg: &ParseConfig) -> Result<ParsedOutput, ParseError> {
    cfg.validate()?;
    if raw.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut diagnostics = Vec::new();
    let (reasoning, answer) = match raw.find(&cfg.think_open) {
        None => (None, raw.to_string()),
        Some(open) => {
            let inner_start = open + cfg.think_open.len();
            match raw[inner_start..].find(&cfg.think_close) {
                None => {
                    diagnostics.push(Diagnostic::UnbalancedThinkTags);
                    (Some(raw.to_string()), String::new())
                }
                Some(rel) => {
                    let inner = &raw[inner_start..inner_start + rel];
                    let rest = &raw[inner_start + rel + cfg.think_close.len()..];
                    (Some(strip_framing(inner).to_string()), strip_answer_lead(rest).to_string())
                }
            }
        }
    };
    let extraction = extract_tool_calls(&answer, cfg);
    diagnostics.extend(extraction.diagnostics);
    let thoughts = reasoning
        .as_deref()
        .map(|r| {
            segment_thoughts(r)
                .into_iter()
                .map(|mut t| {
                    t.category = classify_thought(&t, &cfg.lexicon);
                    t
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(ParsedOutput {
        trajectory: Trajectory {
            raw: raw.to_string(),
            reasoning,
            answer,
            thoughts,
            calls: extraction.calls,
            tokens: None,
        },
        diagnostics,
    })
}

fn strip_framing(inner: &str) -> &str {
    let s = inner.strip_prefix('\n').unwrap_or(inner);
    s.strip_suffix('\n').unwrap_or(s)
}

fn strip_answer_lead(rest: &str) -> &str {
    rest.strip_prefix("\n\n").or_else(|| rest.strip_prefix('\n')).unwrap_or(rest)
}

fn thought_separator() -> &'static Regex {
    static SEP: OnceLock<Regex> = OnceLock::new();
    SEP.get_or_init(|| Regex::new(r"\n[ \t\r]*\n(?:[ \t\r]*\n)*").expect("valid regex"))
}

/// Split reasoning on blank lines. Thoughts are returned as Deduction; use
/// [`classify_thought`] to categorize them.
pub fn segment_thoughts(reasoning: &str) -> Vec<Thought> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut push = |s: usize, e: usize| {
        if !reasoning[s..e].trim().is_empty() {
            out.push(Thought {
                text: reasoning[s..e].to_string(),
                category: BehaviorCategory::Deduction,
                start: s,
                end: e,
            });
        }
    };
    for m in thought_separator().find_iter(reasoning) {
        push(start, m.start());
        start = m.end();
    }
    push(start, reasoning.len());
    out
}

pub fn classify_thought(thought: &Thought, lexicon: &BehaviorLexicon) -> BehaviorCategory {
    lexicon.classify(&thought.text)
}

/// Extract every tool call in textual order. Malformed calls are reported as
/// diagnostics; well-formed siblings are still returned.
pub fn extract_tool_calls(answer: &str, cfg: &ParseConfig) -> CallExtraction {
    let bracket = cfg.call_syntaxes.contains(&CallSyntax::BracketPython);
    let json = cfg.call_syntaxes.contains(&CallSyntax::JsonObject);
    let mut out = CallExtraction::default();
    let bytes = answer.as_bytes();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos];
        if c == b'[' && bracket && looks_like_bracket_call(answer, pos) {
            let mut scanner = Scanner::new(answer, pos);
            scanner.bracket_list(&mut out);
            pos = scanner.pos.max(pos + 1);
            continue;
        }
        if (c == b'{' || c == b'[') && json {
            if let Some(end) = json_calls(answer, pos, &mut out) {
                pos = end;
                continue;
            }
        }
        pos += 1;
    }
    out
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')
}

fn looks_like_bracket_call(text: &str, open: usize) -> bool {
    let rest = text[open + 1..].trim_start();
    let mut chars = rest.char_indices();
    match chars.next() {
        Some((_, c)) if is_ident_start(c) => {}
        _ => return false,
    }
    let end = rest
        .char_indices()
        .find(|(_, c)| !is_ident_char(*c))
        .map_or(rest.len(), |(i, _)| i);
    rest[end..].trim_start().starts_with('(')
}

/// Parses JSON at `start`. Returns the end offset when a value parsed, whether
/// or not it held calls.
fn json_calls(text: &str, start: usize, out: &mut CallExtraction) -> Option<usize> {
    let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<serde_json::Value>();
    let value = stream.next()?.ok()?;
    let end = start + stream.byte_offset();
    match value {
        serde_json::Value::Object(obj) => {
            if let Some(result) = json_object_call(&obj) {
                push_json_result(result, start, out);
            } else if let Some(serde_json::Value::Array(items)) = obj.get("tool_calls") {
                for item in items {
                    if let serde_json::Value::Object(o) = item {
                        if let Some(result) = json_object_call(o) {
                            push_json_result(result, start, out);
                        }
                    }
                }
            }
        }
        serde_json::Value::Array(items) => {
            for item in &items {
                if let serde_json::Value::Object(o) = item {
                    if let Some(result) = json_object_call(o) {
                        push_json_result(result, start, out);
                    }
                }
            }
        }
        _ => {}
    }
    Some(end)
}

fn push_json_result(result: Result<ToolCall, String>, position: usize, out: &mut CallExtraction) {
    match result {
        Ok(call) => out.calls.push(call),
        Err(reason) => out.diagnostics.push(Diagnostic::MalformedCall { position, reason }),
    }
}

/// `None` when the object is not call-shaped at all.
fn json_object_call(obj: &serde_json::Map<String, serde_json::Value>) -> Option<Result<ToolCall, String>> {
    if let Some(serde_json::Value::Object(func)) = obj.get("function") {
        if func.contains_key("name") {
            return json_object_call(func);
        }
    }
    let name = obj.get("name")?;
    let args_field = ["arguments", "parameters", "args"].iter().find_map(|k| obj.get(*k));
    if args_field.is_none() && obj.len() > 1 {
        // e.g. a tool spec or an unrelated record that happens to carry a name
        return None;
    }
    Some((|| {
        let name = name.as_str().ok_or("call name is not a string")?;
        let args: IndexMap<String, Value> = match args_field {
            None | Some(serde_json::Value::Null) => IndexMap::new(),
            Some(serde_json::Value::Object(m)) => m.iter().map(|(k, v)| (k.clone(), Value::from(v.clone()))).collect(),
            Some(serde_json::Value::String(s)) if s.trim().is_empty() => IndexMap::new(),
            Some(serde_json::Value::String(s)) => match serde_json::from_str::<serde_json::Value>(s) {
                Ok(serde_json::Value::Object(m)) => m.into_iter().map(|(k, v)| (k, Value::from(v))).collect(),
                Ok(_) => return Err("encoded arguments are not an object".to_string()),
                Err(e) => return Err(format!("encoded arguments are not valid JSON: {e}")),
            },
            Some(_) => return Err("arguments must be an object or JSON string".to_string()),
        };
        ToolCall::new(name, args).map_err(|e| e.to_string())
    })())
}

/// Recursive-descent scanner for the Python-literal bracket syntax.
struct Scanner<'a> {
    text: &'a str,
    pos: usize,
}

type ScanResult<T> = Result<T, (usize, String)>;

impl<'a> Scanner<'a> {
    fn new(text: &'a str, pos: usize) -> Self {
        Self { text, pos }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn fail<T>(&self, reason: impl Into<String>) -> ScanResult<T> {
        Err((self.pos, reason.into()))
    }

    fn expect(&mut self, c: char) -> ScanResult<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected '{c}'"))
        }
    }

    /// `[call, call, ...]`; stops after `]` or on an unrecoverable error.
    fn bracket_list(&mut self, out: &mut CallExtraction) {
        self.bump(); // '['
        loop {
            self.skip_ws();
            let call_start = self.pos;
            match self.call() {
                Ok(call) => out.calls.push(call),
                Err((position, reason)) => {
                    out.diagnostics.push(Diagnostic::MalformedCall { position, reason });
                    self.pos = call_start;
                    if !self.skip_call() {
                        return;
                    }
                }
            }
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(']') => {
                    self.bump();
                    return;
                }
                _ => {
                    out.diagnostics.push(Diagnostic::MalformedCall {
                        position: self.pos,
                        reason: "expected ',' or ']' after call".into(),
                    });
                    return;
                }
            }
        }
    }

    /// Move past the closing parenthesis of the call starting at `self.pos`.
    fn skip_call(&mut self) -> bool {
        let mut depth = 0i32;
        let mut quote: Option<char> = None;
        while let Some(c) = self.bump() {
            if let Some(q) = quote {
                if c == '\\' {
                    self.bump();
                } else if c == q {
                    quote = None;
                }
                continue;
            }
            match c {
                '"' | '\'' => quote = Some(c),
                '(' | '[' | '{' => depth += 1,
                ')' | '}' => {
                    depth -= 1;
                    if depth == 0 && c == ')' {
                        return true;
                    }
                }
                ']' => {
                    if depth == 0 {
                        // end of the list reached without a closing ')'
                        self.pos -= 1;
                        return true;
                    }
                    depth -= 1;
                }
                _ => {}
            }
        }
        false
    }

    fn ident(&mut self) -> ScanResult<String> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if is_ident_start(c) => {
                self.bump();
            }
            _ => return self.fail("expected identifier"),
        }
        while self.peek().is_some_and(is_ident_char) {
            self.bump();
        }
        Ok(self.text[start..self.pos].to_string())
    }

    fn call(&mut self) -> ScanResult<ToolCall> {
        let name = self.ident()?;
        self.expect('(')?;
        let mut args = IndexMap::new();
        self.skip_ws();
        if self.peek() == Some(')') {
            self.bump();
            return ToolCall::new(name, args).or_else(|e| self.fail(e.to_string()));
        }
        loop {
            let key_pos = self.pos;
            let key = self.ident()?;
            self.skip_ws();
            if self.peek() != Some('=') {
                return self.fail(format!("expected '=' after argument '{key}'"));
            }
            self.bump();
            let value = self.value()?;
            if args.insert(key.clone(), value).is_some() {
                return Err((key_pos, format!("duplicate argument '{key}'")));
            }
            self.skip_ws();
            match self.bump() {
                Some(',') => {
                    self.skip_ws();
                    if self.peek() == Some(')') {
                        self.bump();
                        break;
                    }
                }
                Some(')') => break,
                _ => return self.fail("expected ',' or ')' in argument list"),
            }
        }
        ToolCall::new(name, args).or_else(|e| self.fail(e.to_string()))
    }

    fn value(&mut self) -> ScanResult<Value> {
        self.skip_ws();
        match self.peek() {
            Some('"') | Some('\'') => self.string().map(Value::String),
            Some('[') => self.sequence('[', ']').map(Value::List),
            Some('(') => self.sequence('(', ')').map(Value::List),
            Some('{') => self.map(),
            Some(c) if c == '-' || c == '+' || c == '.' || c.is_ascii_digit() => self.number(),
            Some(c) if is_ident_start(c) => {
                let start = self.pos;
                let word = self.ident()?;
                match word.as_str() {
                    "True" | "true" => Ok(Value::Bool(true)),
                    "False" | "false" => Ok(Value::Bool(false)),
                    "None" | "null" => Ok(Value::Null),
                    _ => Err((start, format!("unsupported expression '{word}'"))),
                }
            }
            Some(c) => self.fail(format!("unexpected character '{c}'")),
            None => self.fail("unexpected end of input"),
        }
    }

    fn string(&mut self) -> ScanResult<String> {
        let quote = self.bump().expect("caller checked quote");
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return self.fail("unterminated string"),
                Some(c) if c == quote => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('r') => s.push('\r'),
                    Some('0') => s.push('\0'),
                    Some('u') => {
                        let hex: String = (0..4).filter_map(|_| self.bump()).collect();
                        let code = u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32);
                        match code {
                            Some(ch) => s.push(ch),
                            None => return self.fail("bad \\u escape"),
                        }
                    }
                    Some(other) => s.push(other),
                    None => return self.fail("unterminated escape"),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn number(&mut self) -> ScanResult<Value> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E' | '_'))
        {
            self.bump();
        }
        let lexeme: String = self.text[start..self.pos].chars().filter(|c| *c != '_').collect();
        lexeme
            .parse::<f64>()
            .ok()
            .filter(|n| n.is_finite())
            .map(Value::Number)
            .ok_or((start, format!("invalid number '{lexeme}'")))
    }

    fn sequence(&mut self, open: char, close: char) -> ScanResult<Vec<Value>> {
        self.expect(open)?;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(close) {
                self.bump();
                return Ok(items);
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.bump() {
                Some(',') => {}
                Some(c) if c == close => return Ok(items),
                _ => return self.fail(format!("expected ',' or '{close}'")),
            }
        }
    }

    fn map(&mut self) -> ScanResult<Value> {
        self.expect('{')?;
        let mut map = IndexMap::new();
        loop {
            self.skip_ws();
            if self.peek() == Some('}') {
                self.bump();
                return Ok(Value::Map(map));
            }
            let key = match self.peek() {
                Some('"') | Some('\'') => self.string()?,
                _ => return self.fail("map keys must be quoted strings"),
            };
            self.expect(':')?;
            let value = self.value()?;
            map.insert(key, value);
            self.skip_ws();
            match self.bump() {
                Some(',') => {}
                Some('}') => return Ok(Value::Map(map)),
                _ => return self.fail("expected ',' or '}'"),
            }
        }
    }
}
