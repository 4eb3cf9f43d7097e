//! Shared domain types: trajectories, thoughts, token records, rollout groups
//! and the tool-use context.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::value::ToolCall;
use crate::CoreError;

/// Reasoning behavior of a single thought.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BehaviorCategory {
    TaskDecomposition,
    Reflection,
    Verification,
    Deduction,
}

impl BehaviorCategory {
    pub const ALL: [BehaviorCategory; 4] = [
        BehaviorCategory::TaskDecomposition,
        BehaviorCategory::Reflection,
        BehaviorCategory::Verification,
        BehaviorCategory::Deduction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorCategory::TaskDecomposition => "TaskDecomposition",
            BehaviorCategory::Reflection => "Reflection",
            BehaviorCategory::Verification => "Verification",
            BehaviorCategory::Deduction => "Deduction",
        }
    }
}

impl fmt::Display for BehaviorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorCategory {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        match norm.as_str() {
            "taskdecomposition" | "decomposition" => Ok(BehaviorCategory::TaskDecomposition),
            "reflection" => Ok(BehaviorCategory::Reflection),
            "verification" => Ok(BehaviorCategory::Verification),
            "deduction" => Ok(BehaviorCategory::Deduction),
            _ => Err(CoreError::UnknownCategory(s.to_string())),
        }
    }
}

/// A contiguous block of reasoning. `start`/`end` are byte offsets into the
/// reasoning string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thought {
    pub text: String,
    pub category: BehaviorCategory,
    pub start: usize,
    pub end: usize,
}

/// Per-token data logged with a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    #[serde(default)]
    pub token_id: i64,
    /// Natural-log probability of the sampled token under the behavior policy.
    #[serde(alias = "logprob")]
    pub logprob_chosen: f64,
    /// Full-vocabulary entropy in nats, when the distribution was logged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_old: Option<f64>,
}

/// A full model turn.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub raw: String,
    pub reasoning: Option<String>,
    pub answer: String,
    pub thoughts: Vec<Thought>,
    pub calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<TokenRecord>>,
}

impl Trajectory {
    /// A trajectory known only by its logged tokens (no text).
    pub fn from_tokens(tokens: Vec<TokenRecord>) -> Self {
        Self {
            tokens: Some(tokens),
            ..Self::default()
        }
    }

    /// Canonical text form: `<think>\n{reasoning}\n</think>\n\n{answer}`, or the
    /// bare answer when there is no reasoning block.
    pub fn render(&self) -> String {
        match &self.reasoning {
            Some(r) => format!("<think>\n{r}\n</think>\n\n{}", self.answer),
            None => self.answer.clone(),
        }
    }
}

/// G sibling rollouts for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub prompt_id: String,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(prompt_id: impl Into<String>, trajectories: Vec<Trajectory>, rewards: Vec<f64>) -> Result<Self, CoreError> {
        if trajectories.len() != rewards.len() {
            return Err(CoreError::GroupShape {
                trajectories: trajectories.len(),
                rewards: rewards.len(),
            });
        }
        if rewards.len() < 2 {
            return Err(CoreError::GroupTooSmall(rewards.len()));
        }
        Ok(Self {
            prompt_id: prompt_id.into(),
            trajectories,
            rewards,
        })
    }

    pub fn size(&self) -> usize {
        self.rewards.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub key: String,
    #[serde(rename = "type", default = "default_param_type")]
    pub type_tag: String,
    #[serde(default)]
    pub required: bool,
}

fn default_param_type() -> String {
    "string".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
}

impl ToolSpec {
    pub fn validate(&self) -> Result<(), CoreError> {
        let mut seen = std::collections::HashSet::new();
        for p in &self.params {
            if !seen.insert(p.key.as_str()) {
                return Err(CoreError::DuplicateParam {
                    tool: self.name.clone(),
                    key: p.key.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Self::new(Role::Tool, content)
    }
}

/// Policy, tools, history and the current query.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Context {
    #[serde(default)]
    pub policy: String,
    #[serde(default)]
    pub tools: Vec<ToolSpec>,
    #[serde(default)]
    pub history: Vec<ChatMessage>,
    pub query: String,
}

impl Context {
    pub fn validate(&self) -> Result<(), CoreError> {
        let mut seen = std::collections::HashSet::new();
        for tool in &self.tools {
            if !seen.insert(tool.name.as_str()) {
                return Err(CoreError::DuplicateTool(tool.name.clone()));
            }
            tool.validate()?;
        }
        Ok(())
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_requires_two_rollouts() {
        let err = RolloutGroup::new("p", vec![Trajectory::default()], vec![1.0]).unwrap_err();
        assert!(matches!(err, CoreError::GroupTooSmall(1)));
        let err = RolloutGroup::new("p", vec![Trajectory::default()], vec![1.0, 2.0]).unwrap_err();
        assert!(matches!(err, CoreError::GroupShape { .. }));
    }

    #[test]
    fn duplicate_tools_rejected() {
        let spec = ToolSpec {
            name: "f".into(),
            description: String::new(),
            params: vec![],
        };
        let ctx = Context {
            tools: vec![spec.clone(), spec],
            query: "q".into(),
            ..Context::default()
        };
        assert!(matches!(ctx.validate(), Err(CoreError::DuplicateTool(_))));
    }

    #[test]
    fn category_names_parse() {
        for c in BehaviorCategory::ALL {
            assert_eq!(c.as_str().parse::<BehaviorCategory>().unwrap(), c);
        }
        assert_eq!("task_decomposition".parse::<BehaviorCategory>().unwrap(), BehaviorCategory::TaskDecomposition);
    }
}
