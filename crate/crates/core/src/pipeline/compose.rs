//! Turn subtask results into think-block trajectories.

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::plan::{Scenario, SubtaskPlan};
use crate::types::ChatMessage;
use crate::value::{render_bracket_calls, ToolCall, Value};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TemplateError {
    #[error("template {template:?} uses {{{name}}} which is not available")]
    MissingPlaceholder { template: String, name: String },
    #[error("{0:?} composition needs at least one subtask result")]
    EmptyResults(Scenario),
    #[error("subtask {0} has no tool call")]
    MissingCall(usize),
    #[error("template file: {0}")]
    File(String),
}

const DEFAULT_TEMPLATES: &str = include_str!("../../templates/compose.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeTemplates {
    pub plan_header: String,
    /// Placeholders: `{step}`, `{description}`.
    pub plan_item: String,
    /// Placeholders: `{step}`, `{description}`, `{reasoning}`.
    pub step: String,
    pub parallel_reflection: String,
    /// Placeholders: `{explanation}`, `{reflection}`.
    pub irrelevant: String,
    pub irrelevant_reflection: String,
    /// Answer used when the seed sample carries no answer text.
    pub irrelevant_answer: String,
}

impl Default for ComposeTemplates {
    fn default() -> Self {
        Self::from_json(DEFAULT_TEMPLATES).expect("built-in templates parse")
    }
}

impl ComposeTemplates {
    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        serde_json::from_str(text).map_err(|e| TemplateError::File(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

fn placeholder() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"))
}

/// Substitute `{name}` placeholders in one pass. Substituted text is not
/// rescanned, so values may contain braces.
pub fn render(template_name: &str, template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for caps in placeholder().captures_iter(template) {
        let m = caps.get(0).expect("whole match");
        let name = &caps[1];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| TemplateError::MissingPlaceholder {
                template: template_name.to_string(),
                name: name.to_string(),
            })?;
        out.push_str(&template[last..m.start()]);
        out.push_str(value);
        last = m.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskResult {
    pub step: usize,
    pub subtask: String,
    pub reasoning: String,
    pub call: Option<ToolCall>,
    pub observation: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedTrajectory {
    pub scenario: Scenario,
    /// Final assistant turn.
    pub text: String,
    /// Assistant and tool turns in order; the last one is `text`.
    pub turns: Vec<ChatMessage>,
    pub source_plan: SubtaskPlan,
    pub verified: bool,
}

pub fn render_turn(think: &str, answer: &str) -> String {
    format!("<think>\n{think}\n</think>\n\n{answer}")
}

fn clean(reasoning: &str) -> String {
    reasoning.replace("<think>", "").replace("</think>", "").trim().to_string()
}

fn plan_block(plan: &SubtaskPlan, t: &ComposeTemplates) -> Result<String, TemplateError> {
    let mut parts = vec![t.plan_header.clone()];
    for s in &plan.subtasks {
        let step = s.step.to_string();
        parts.push(render("plan_item", &t.plan_item, &[("step", &step), ("description", &s.description)])?);
    }
    Ok(parts.join("\n\n"))
}

fn step_block(r: &SubtaskResult, t: &ComposeTemplates) -> Result<String, TemplateError> {
    let step = r.step.to_string();
    let reasoning = clean(&r.reasoning);
    Ok(render(
        "step",
        &t.step,
        &[("step", &step), ("description", &r.subtask), ("reasoning", &reasoning)],
    )?
    .trim()
    .to_string())
}

fn call_of(r: &SubtaskResult) -> Result<&ToolCall, TemplateError> {
    r.call.as_ref().ok_or(TemplateError::MissingCall(r.step))
}

/// Sequential plan: one assistant turn per subtask with tool observations in
/// between. The plan enumeration opens the first turn.
pub fn compose_sequential(plan: &SubtaskPlan, results: &[SubtaskResult], t: &ComposeTemplates) -> Result<ComposedTrajectory, TemplateError> {
    if results.is_empty() {
        return Err(TemplateError::EmptyResults(Scenario::Sequential));
    }
    let mut turns = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let call = call_of(r)?;
        let mut think = step_block(r, t)?;
        if i == 0 {
            think = format!("{}\n\n{think}", plan_block(plan, t)?);
        }
        turns.push(ChatMessage::assistant(render_turn(&think, &render_bracket_calls(std::slice::from_ref(call)))));
        if i + 1 < results.len() {
            if let Some(obs) = &r.observation {
                turns.push(ChatMessage::tool(obs.to_json().to_string()));
            }
        }
    }
    Ok(finish(Scenario::Sequential, plan, turns))
}

/// Parallel plan: a single turn with every call in one list.
pub fn compose_parallel(plan: &SubtaskPlan, results: &[SubtaskResult], t: &ComposeTemplates) -> Result<ComposedTrajectory, TemplateError> {
    if results.is_empty() {
        return Err(TemplateError::EmptyResults(Scenario::Parallel));
    }
    let mut parts = vec![plan_block(plan, t)?];
    let mut calls = Vec::new();
    for r in results {
        parts.push(step_block(r, t)?);
        calls.push(call_of(r)?.clone());
    }
    parts.push(t.parallel_reflection.clone());
    let turn = ChatMessage::assistant(render_turn(&parts.join("\n\n"), &render_bracket_calls(&calls)));
    Ok(finish(Scenario::Parallel, plan, vec![turn]))
}

/// No tool applies: explanation and reflection in the think block, answer
/// text (or the fallback) outside it.
pub fn compose_irrelevant(explanation: &str, answer_text: Option<&str>, t: &ComposeTemplates) -> Result<ComposedTrajectory, TemplateError> {
    let explanation = clean(explanation);
    let think = render(
        "irrelevant",
        &t.irrelevant,
        &[("explanation", &explanation), ("reflection", &t.irrelevant_reflection)],
    )?;
    let answer = answer_text.map(str::trim).filter(|a| !a.is_empty()).unwrap_or(&t.irrelevant_answer);
    let turn = ChatMessage::assistant(render_turn(think.trim(), answer));
    Ok(finish(Scenario::Irrelevant, &SubtaskPlan::irrelevant(), vec![turn]))
}

fn finish(scenario: Scenario, plan: &SubtaskPlan, turns: Vec<ChatMessage>) -> ComposedTrajectory {
    ComposedTrajectory {
        scenario,
        text: turns.last().map(|m| m.content.clone()).unwrap_or_default(),
        turns,
        source_plan: plan.clone(),
        verified: false,
    }
}
