//! Subtask plans returned by the decomposition oracle.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::value::ToolCall;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Sequential,
    Parallel,
    Irrelevant,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Sequential => "sequential",
            Scenario::Parallel => "parallel",
            Scenario::Irrelevant => "irrelevant",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequential" => Ok(Scenario::Sequential),
            "parallel" => Ok(Scenario::Parallel),
            "irrelevant" | "irrelevance" | "none" => Ok(Scenario::Irrelevant),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub step: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskPlan {
    pub scenario: Scenario,
    pub subtasks: Vec<Subtask>,
}

impl SubtaskPlan {
    pub fn new(scenario: Scenario, subtasks: Vec<Subtask>) -> Result<Self, String> {
        for (i, s) in subtasks.iter().enumerate() {
            if s.step != i + 1 {
                return Err(format!("expected step {} at position {}, found {}", i + 1, i, s.step));
            }
        }
        if scenario == Scenario::Irrelevant && !subtasks.is_empty() {
            return Err("an irrelevant plan cannot list subtasks".into());
        }
        Ok(Self { scenario, subtasks })
    }

    pub fn irrelevant() -> Self {
        Self {
            scenario: Scenario::Irrelevant,
            subtasks: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    /// Serialized in the form the decomposition prompt asks for.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "scenario": self.scenario.as_str(),
            "subtasks": self.subtasks,
        })
        .to_string()
    }
}

/// `true` iff the plan has exactly one subtask per reference call.
pub fn check_plan(plan: &SubtaskPlan, reference: &[ToolCall]) -> bool {
    plan.subtasks.len() == reference.len()
}

/// Parse oracle output into a plan.
///
/// Accepts the bare list form `[{"step": 1, "description": ...}, ...]` or an
/// object `{"scenario": ..., "subtasks": [...]}`, optionally surrounded by
/// prose or code fences. A missing scenario means Sequential; an empty subtask
/// list means Irrelevant.
pub fn parse_plan(text: &str) -> Result<SubtaskPlan, String> {
    let json = find_json(text).ok_or_else(|| "no JSON list or object found".to_string())?;
    let (declared, items) = match json {
        Json::Array(items) => (None, items),
        Json::Object(mut map) => {
            let declared = match map.remove("scenario") {
                None | Some(Json::Null) => None,
                Some(Json::String(s)) => Some(s.parse::<Scenario>()?),
                Some(other) => return Err(format!("scenario must be a string, got {other}")),
            };
            let items = match map.remove("subtasks") {
                None | Some(Json::Null) => Vec::new(),
                Some(Json::Array(items)) => items,
                Some(other) => return Err(format!("subtasks must be a list, got {other}")),
            };
            (declared, items)
        }
        _ => unreachable!("find_json only returns containers"),
    };
    let subtasks = items.into_iter().map(parse_subtask).collect::<Result<Vec<_>, _>>()?;
    let scenario = match declared {
        _ if subtasks.is_empty() => Scenario::Irrelevant,
        Some(Scenario::Irrelevant) => return Err("irrelevant scenario declared with subtasks".into()),
        Some(s) => s,
        None => Scenario::Sequential,
    };
    SubtaskPlan::new(scenario, subtasks)
}

fn parse_subtask(item: Json) -> Result<Subtask, String> {
    let Json::Object(map) = item else {
        return Err(format!("subtask must be an object, got {item}"));
    };
    let step = match map.get("step") {
        Some(Json::Number(n)) => n.as_u64().ok_or_else(|| format!("step must be a positive integer, got {n}"))? as usize,
        Some(Json::String(s)) => s.trim().parse().map_err(|_| format!("step must be an integer, got {s:?}"))?,
        other => return Err(format!("missing or invalid step: {other:?}")),
    };
    let description = match map.get("description") {
        Some(Json::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
        other => return Err(format!("missing or empty description: {other:?}")),
    };
    Ok(Subtask { step, description })
}

fn find_json(text: &str) -> Option<Json> {
    for (i, c) in text.char_indices() {
        if c != '[' && c != '{' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Json>();
        match stream.next() {
            Some(Ok(v @ Json::Array(_))) => return Some(v),
            // a bare subtask object inside a truncated list is not a plan
            Some(Ok(v @ Json::Object(_))) if v.get("subtasks").is_some() || v.get("scenario").is_some() => return Some(v),
            _ => {}
        }
    }
    None
}
