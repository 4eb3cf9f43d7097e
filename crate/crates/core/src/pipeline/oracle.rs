//! Model oracles: a deterministic scripted responder and an HTTP client for
//! chat-completions style endpoints.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::plan::{parse_plan, Scenario, Subtask, SubtaskPlan};
use super::prompt::{last_user_message, reference_text, PromptKind};
use crate::parser::{extract_tool_calls, ParseConfig};
use crate::types::{ChatMessage, Role};
use crate::value::{render_bracket_calls, Value};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
}

/// Per-request generation overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

pub trait Oracle: Send + Sync {
    fn generate(&self, messages: &[ChatMessage], params: &GenParams) -> Result<String, OracleError>;
}

/// Respond with `response` when every `when` substring occurs in the last
/// user message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub when: Vec<String>,
    pub response: String,
}

/// Probability that a decomposition answer repeats its last subtask, by
/// prompt variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub without_reference: f64,
    pub with_reference: f64,
    pub with_reference_and_few_shots: f64,
}

impl NoiseModel {
    fn rate(&self, kind: PromptKind) -> f64 {
        match kind {
            PromptKind::Decomposition { has_reference: false, .. } => self.without_reference,
            PromptKind::Decomposition {
                has_reference: true,
                has_few_shots: false,
            } => self.with_reference,
            PromptKind::Decomposition {
                has_reference: true,
                has_few_shots: true,
            } => self.with_reference_and_few_shots,
            _ => 0.0,
        }
    }
}

fn default_true() -> bool {
    true
}

/// File form of a scripted oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Answer from the prompt itself when no rule matches.
    #[serde(default = "default_true")]
    pub auto_reference: bool,
}

impl Default for ScriptFile {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            noise: NoiseModel::default(),
            auto_reference: true,
        }
    }
}

pub const NO_TOOL_EXPLANATION: &str =
    "The request can be answered directly. It does not ask for any action or lookup that the available tools provide, so no tool is needed.";

/// Deterministic oracle driven by substring rules.
///
/// Responses may contain `{{obs.field}}` placeholders, filled from the JSON
/// content of the latest tool message. Unresolved placeholders are left as
/// they are. Noise is a pure function of the seed and the messages.
#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    script: ScriptFile,
    seed: u64,
}

fn placeholder() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*obs\.([A-Za-z0-9_.]+)\s*\}\}").expect("valid regex"))
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |cur, part| match cur {
        Value::Map(m) => m.get(part),
        Value::List(items) => part.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

/// Replace `{{obs.path}}` with values from the latest tool observation.
pub fn fill_observations(template: &str, messages: &[ChatMessage]) -> String {
    let obs = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::Tool)
        .and_then(|m| serde_json::from_str::<serde_json::Value>(&m.content).ok())
        .map(Value::from);
    placeholder()
        .replace_all(template, |caps: &regex::Captures| {
            obs.as_ref()
                .and_then(|o| lookup(o, &caps[1]))
                .map(Value::to_python_literal)
                .unwrap_or_else(|| caps[0].to_string())
        })
        .into_owned()
}

impl ScriptedOracle {
    pub fn new(script: ScriptFile, seed: u64) -> Self {
        Self { script, seed }
    }

    pub fn from_json(text: &str, seed: u64) -> Result<Self, String> {
        serde_json::from_str(text).map(|s| Self::new(s, seed)).map_err(|e| e.to_string())
    }

    pub fn script(&self) -> &ScriptFile {
        &self.script
    }

    /// Uniform draw in [0, 1) from the seed and the conversation.
    fn draw(&self, messages: &[ChatMessage]) -> f64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(serde_json::to_vec(messages).unwrap_or_default());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn auto_response(&self, prompt: &str, kind: PromptKind) -> Option<String> {
        let cfg = ParseConfig::default();
        match kind {
            PromptKind::Decomposition { has_reference: true, .. } => {
                let calls = extract_tool_calls(reference_text(prompt)?, &cfg).calls;
                let plan = if calls.is_empty() {
                    SubtaskPlan::irrelevant()
                } else {
                    SubtaskPlan {
                        scenario: Scenario::Sequential,
                        subtasks: calls
                            .iter()
                            .enumerate()
                            .map(|(i, c)| Subtask {
                                step: i + 1,
                                description: format!("Call {}", render_bracket_calls(std::slice::from_ref(c))),
                            })
                            .collect(),
                    }
                };
                Some(plan.to_json())
            }
            PromptKind::Decomposition { has_reference: false, .. } => Some(SubtaskPlan::irrelevant().to_json()),
            PromptKind::Subtask => {
                let calls = extract_tool_calls(prompt.lines().next()?, &cfg).calls;
                Some(format!(
                    "<think>\nThe subtask names the call to make, so I will issue it with the given arguments.\n</think>\n\n{}",
                    render_bracket_calls(&calls)
                ))
            }
            PromptKind::Explanation => Some(NO_TOOL_EXPLANATION.to_string()),
            PromptKind::Other => None,
        }
    }
}

fn over_decompose(text: &str) -> String {
    match parse_plan(text) {
        Ok(mut plan) if !plan.is_empty() => {
            let last = plan.subtasks.last().cloned().expect("non-empty");
            plan.subtasks.push(Subtask {
                step: last.step + 1,
                description: last.description,
            });
            plan.to_json()
        }
        _ => text.to_string(),
    }
}

impl Oracle for ScriptedOracle {
    fn generate(&self, messages: &[ChatMessage], _params: &GenParams) -> Result<String, OracleError> {
        let prompt = last_user_message(messages).unwrap_or("");
        let kind = PromptKind::detect(prompt);
        let rule = self
            .script
            .rules
            .iter()
            .find(|r| r.when.iter().all(|w| prompt.contains(w.as_str())));
        let text = match rule {
            Some(r) => r.response.clone(),
            None if self.script.auto_reference => self
                .auto_response(prompt, kind)
                .ok_or_else(|| OracleError::Unavailable("no scripted response for prompt".into()))?,
            None => return Err(OracleError::Unavailable("no scripted response for prompt".into())),
        };
        let text = fill_observations(&text, messages);
        let rate = self.script.noise.rate(kind);
        if rate > 0.0 && self.draw(messages) < rate {
            return Ok(over_decompose(&text));
        }
        Ok(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub timeout_s: f64,
    pub retries: u32,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    pub backoff_ms: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            temperature: 0.0,
            max_tokens: None,
            timeout_s: 60.0,
            retries: 3,
            api_key_env: Some("OPENAI_API_KEY".into()),
            max_in_flight: 4,
            backoff_ms: 500,
        }
    }
}

struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Client for `POST {base_url}/chat/completions`.
pub struct HttpOracle {
    cfg: OracleConfig,
    agent: ureq::Agent,
    limiter: Limiter,
}

impl HttpOracle {
    pub fn new(cfg: OracleConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = Limiter {
            free: Mutex::new(cfg.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        Self { cfg, agent, limiter }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    fn request_body(&self, messages: &[ChatMessage], params: &GenParams) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": params.temperature.unwrap_or(self.cfg.temperature),
        });
        if let Some(n) = params.max_tokens.or(self.cfg.max_tokens) {
            body["max_tokens"] = n.into();
        }
        body
    }

    fn attempt(&self, url: &str, body: &serde_json::Value) -> Result<String, (bool, String)> {
        let mut req = self.agent.post(url);
        if let Some(var) = &self.cfg.api_key_env {
            if let Ok(key) = std::env::var(var) {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
        }
        let mut resp = req.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| (true, e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err((true, format!("HTTP {status}: {text}")));
        }
        if status != 200 {
            return Err((false, format!("HTTP {status}: {text}")));
        }
        let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| (false, format!("bad JSON: {e}")))?;
        json.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| (false, "response has no choices[0].message.content".into()))
    }
}

impl Oracle for HttpOracle {
    fn generate(&self, messages: &[ChatMessage], params: &GenParams) -> Result<String, OracleError> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let body = self.request_body(messages, params);
        let _permit = self.limiter.acquire();
        let mut last = String::new();
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                let wait = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(&url, &body) {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) => {
                    log::warn!("oracle attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                    if !retryable {
                        break;
                    }
                }
            }
        }
        Err(OracleError::Unavailable(last))
    }
}
