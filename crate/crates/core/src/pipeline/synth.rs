//! Decompose, execute, compose and verify, per sample and in batches.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::compose::{compose_irrelevant, compose_parallel, compose_sequential, ComposeTemplates, ComposedTrajectory, SubtaskResult, TemplateError};
use super::oracle::{GenParams, Oracle, OracleError};
use super::plan::{check_plan, parse_plan, Scenario, Subtask, SubtaskPlan};
use super::prompt::{decomposition_prompt, default_few_shots, explanation_prompt, initial_messages, retry_prompt, subtask_prompt, FewShot};
use super::registry::{RegistryError, ToolRegistry};
use crate::parser::{parse_output, ParseConfig};
use crate::reward::{align_calls, call_rewards, format_matches};
use crate::types::{ChatMessage, Context, Role};
use crate::value::{render_bracket_calls, ToolCall};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    InvalidSample,
    DecomposeParse,
    OracleUnavailable,
    CountMismatch,
    SubtaskParse,
    ToolNotFound,
    ToolArg,
    Template,
    VerificationFailed,
}

impl FailureKind {
    pub const ALL: [FailureKind; 9] = [
        FailureKind::InvalidSample,
        FailureKind::DecomposeParse,
        FailureKind::OracleUnavailable,
        FailureKind::CountMismatch,
        FailureKind::SubtaskParse,
        FailureKind::ToolNotFound,
        FailureKind::ToolArg,
        FailureKind::Template,
        FailureKind::VerificationFailed,
    ];
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PipelineError {
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("decomposition output not in the required format: {0}")]
    DecompositionParse(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("plan has {subtasks} subtasks for {reference} reference calls")]
    CountMismatch { subtasks: usize, reference: usize },
    #[error("no tool call in the answer for subtask {step}")]
    SubtaskParse { step: usize, partial: Vec<SubtaskResult> },
    #[error("subtask {step}: tool {name:?} is not registered")]
    ToolNotFound { step: usize, name: String, partial: Vec<SubtaskResult> },
    #[error("subtask {step}: {reason}")]
    ToolArg { step: usize, reason: String, partial: Vec<SubtaskResult> },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("composed trajectory does not reproduce the reference calls")]
    VerificationFailed,
}

impl PipelineError {
    pub fn kind(&self) -> FailureKind {
        match self {
            PipelineError::InvalidSample(_) => FailureKind::InvalidSample,
            PipelineError::DecompositionParse(_) => FailureKind::DecomposeParse,
            PipelineError::Oracle(_) => FailureKind::OracleUnavailable,
            PipelineError::CountMismatch { .. } => FailureKind::CountMismatch,
            PipelineError::SubtaskParse { .. } => FailureKind::SubtaskParse,
            PipelineError::ToolNotFound { .. } => FailureKind::ToolNotFound,
            PipelineError::ToolArg { .. } => FailureKind::ToolArg,
            PipelineError::Template(_) => FailureKind::Template,
            PipelineError::VerificationFailed => FailureKind::VerificationFailed,
        }
    }
}

/// Input record: context, reference calls and optional answer text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSample {
    pub id: String,
    #[serde(flatten)]
    pub context: Context,
    #[serde(default)]
    pub reference: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_text: Option<String>,
}

/// Output record in chat format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: String,
    pub scenario: Scenario,
    pub messages: Vec<ChatMessage>,
    pub reference: Vec<ToolCall>,
}

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    /// Worker threads for the batch; 0 uses the rayon default.
    pub jobs: usize,
    /// Show the reference calls to the decomposition oracle.
    pub include_reference: bool,
    pub few_shots: Vec<FewShot>,
    pub gen: GenParams,
    pub parse: ParseConfig,
    pub templates: ComposeTemplates,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            jobs: 4,
            include_reference: true,
            few_shots: default_few_shots(),
            gen: GenParams::default(),
            parse: ParseConfig::default(),
            templates: ComposeTemplates::default(),
        }
    }
}

/// Ask the oracle for a plan, retrying once on unparseable output.
pub fn decompose(
    ctx: &Context,
    reference: Option<&[ToolCall]>,
    oracle: &dyn Oracle,
    few_shots: &[FewShot],
    params: &GenParams,
) -> Result<SubtaskPlan, PipelineError> {
    let prompt = decomposition_prompt(ctx, reference, few_shots);
    let first = oracle.generate(&[ChatMessage::user(prompt.clone())], params)?;
    match parse_plan(&first) {
        Ok(plan) => Ok(plan),
        Err(e) => {
            log::debug!("decomposition parse failed, retrying: {e}");
            let messages = [
                ChatMessage::user(prompt.clone()),
                ChatMessage::assistant(first),
                ChatMessage::user(retry_prompt(&prompt)),
            ];
            let second = oracle.generate(&messages, params)?;
            parse_plan(&second).map_err(PipelineError::DecompositionParse)
        }
    }
}

fn run_subtask(
    state: &[ChatMessage],
    s: &Subtask,
    oracle: &dyn Oracle,
    cfg: &SynthesisConfig,
    partial: &[SubtaskResult],
) -> Result<(String, ToolCall), PipelineError> {
    let mut messages = state.to_vec();
    messages.push(ChatMessage::user(subtask_prompt(s.step, &s.description)));
    let text = oracle.generate(&messages, &cfg.gen)?;
    let parse_err = || PipelineError::SubtaskParse {
        step: s.step,
        partial: partial.to_vec(),
    };
    let parsed = parse_output(&text, &cfg.parse).map_err(|_| parse_err())?;
    let t = parsed.trajectory;
    let call = t.calls.into_iter().next().ok_or_else(parse_err)?;
    let reasoning = match t.reasoning {
        Some(r) => r,
        None => text.find('[').map_or(text.as_str(), |i| &text[..i]).trim().to_string(),
    };
    Ok((reasoning, call))
}

/// Run subtasks in order, feeding each observation into the next prompt.
pub fn execute_sequential(
    ctx: &Context,
    plan: &SubtaskPlan,
    oracle: &dyn Oracle,
    registry: &ToolRegistry,
    cfg: &SynthesisConfig,
) -> Result<Vec<SubtaskResult>, PipelineError> {
    let mut state = initial_messages(ctx);
    let mut results: Vec<SubtaskResult> = Vec::new();
    for s in &plan.subtasks {
        let (reasoning, call) = run_subtask(&state, s, oracle, cfg, &results)?;
        let observation = registry.execute(&call).map_err(|e| match e {
            RegistryError::ToolNotFound(name) => PipelineError::ToolNotFound {
                step: s.step,
                name,
                partial: results.clone(),
            },
            other => PipelineError::ToolArg {
                step: s.step,
                reason: other.to_string(),
                partial: results.clone(),
            },
        })?;
        state.push(ChatMessage::assistant(render_bracket_calls(std::slice::from_ref(&call))));
        state.push(ChatMessage::tool(observation.to_json().to_string()));
        results.push(SubtaskResult {
            step: s.step,
            subtask: s.description.clone(),
            reasoning,
            call: Some(call),
            observation: Some(observation),
        });
    }
    Ok(results)
}

/// Prompt every subtask against the same starting state. Tools are not run.
pub fn execute_parallel(ctx: &Context, plan: &SubtaskPlan, oracle: &dyn Oracle, cfg: &SynthesisConfig) -> Result<Vec<SubtaskResult>, PipelineError> {
    let state = initial_messages(ctx);
    plan.subtasks
        .par_iter()
        .map(|s| {
            let (reasoning, call) = run_subtask(&state, s, oracle, cfg, &[])?;
            Ok(SubtaskResult {
                step: s.step,
                subtask: s.description.clone(),
                reasoning,
                call: Some(call),
                observation: None,
            })
        })
        .collect()
}

pub fn explain_irrelevant(ctx: &Context, oracle: &dyn Oracle, params: &GenParams) -> Result<String, PipelineError> {
    let mut messages = initial_messages(ctx);
    messages.push(ChatMessage::user(explanation_prompt()));
    let text = oracle.generate(&messages, params)?;
    if text.trim().is_empty() {
        return Err(OracleError::Unavailable("empty explanation".into()).into());
    }
    Ok(text)
}

/// Check assistant turns against the reference: every turn well formed, and
/// the calls across turns score 1 on structure, keys and values. Sequential
/// turns must also follow the reference order. Irrelevant needs no calls on
/// either side.
pub fn verify_turns(scenario: Scenario, turns: &[ChatMessage], reference: &[ToolCall], cfg: &ParseConfig) -> bool {
    let mut calls = Vec::new();
    let mut assistant_turns = 0;
    for m in turns.iter().filter(|m| m.role == Role::Assistant) {
        assistant_turns += 1;
        if !format_matches(&m.content) {
            return false;
        }
        match parse_output(&m.content, cfg) {
            Ok(p) => calls.extend(p.trajectory.calls),
            Err(_) => return false,
        }
    }
    if assistant_turns == 0 {
        return false;
    }
    if scenario == Scenario::Irrelevant {
        return calls.is_empty() && reference.is_empty();
    }
    if reference.is_empty() {
        return false;
    }
    if scenario == Scenario::Sequential && !calls.iter().map(|c| &c.name).eq(reference.iter().map(|c| &c.name)) {
        return false;
    }
    let alignment = align_calls(reference, &calls);
    call_rewards(reference, &calls, &alignment) == (1.0, 1.0, 1.0)
}

pub fn verify(composed: &ComposedTrajectory, reference: &[ToolCall], cfg: &ParseConfig) -> bool {
    verify_turns(composed.scenario, &composed.turns, reference, cfg)
}

/// Re-check a dataset row: the turns after the last user message.
pub fn verify_row(row: &DatasetRow, cfg: &ParseConfig) -> bool {
    let start = row.messages.iter().rposition(|m| m.role == Role::User).map_or(0, |i| i + 1);
    verify_turns(row.scenario, &row.messages[start..], &row.reference, cfg)
}

/// Full pipeline for one sample.
pub fn process_sample(
    sample: &SeedSample,
    oracle: &dyn Oracle,
    registry: &ToolRegistry,
    cfg: &SynthesisConfig,
) -> Result<ComposedTrajectory, PipelineError> {
    let ctx = &sample.context;
    ctx.validate().map_err(|e| PipelineError::InvalidSample(e.to_string()))?;
    if ctx.query.trim().is_empty() {
        return Err(PipelineError::InvalidSample("empty query".into()));
    }
    let reference = cfg.include_reference.then_some(sample.reference.as_slice());
    let plan = decompose(ctx, reference, oracle, &cfg.few_shots, &cfg.gen)?;
    if !check_plan(&plan, &sample.reference) {
        return Err(PipelineError::CountMismatch {
            subtasks: plan.len(),
            reference: sample.reference.len(),
        });
    }
    let mut composed = match plan.scenario {
        Scenario::Sequential => {
            let results = execute_sequential(ctx, &plan, oracle, registry, cfg)?;
            compose_sequential(&plan, &results, &cfg.templates)?
        }
        Scenario::Parallel => {
            let results = execute_parallel(ctx, &plan, oracle, cfg)?;
            compose_parallel(&plan, &results, &cfg.templates)?
        }
        Scenario::Irrelevant => {
            let explanation = explain_irrelevant(ctx, oracle, &cfg.gen)?;
            compose_irrelevant(&explanation, sample.answer_text.as_deref(), &cfg.templates)?
        }
    };
    if !verify(&composed, &sample.reference, &cfg.parse) {
        return Err(PipelineError::VerificationFailed);
    }
    composed.verified = true;
    Ok(composed)
}

pub fn to_row(sample: &SeedSample, composed: &ComposedTrajectory) -> DatasetRow {
    let mut messages = initial_messages(&sample.context);
    messages.extend(composed.turns.iter().cloned());
    DatasetRow {
        id: sample.id.clone(),
        scenario: composed.scenario,
        messages,
        reference: sample.reference.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSample {
    pub id: String,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub total: usize,
    pub verified: usize,
    pub success_rate: f64,
    pub failures: BTreeMap<FailureKind, usize>,
    pub failed: Vec<FailedSample>,
}

impl SynthesisReport {
    pub fn from_outcomes<'a, I>(outcomes: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, Result<(), &'a PipelineError>)>,
    {
        let mut failures: BTreeMap<FailureKind, usize> = FailureKind::ALL.iter().map(|k| (*k, 0)).collect();
        let mut failed = Vec::new();
        let (mut total, mut verified) = (0, 0);
        for (id, outcome) in outcomes {
            total += 1;
            match outcome {
                Ok(()) => verified += 1,
                Err(e) => {
                    *failures.entry(e.kind()).or_default() += 1;
                    failed.push(FailedSample {
                        id: id.to_string(),
                        kind: e.kind(),
                        message: e.to_string(),
                    });
                }
            }
        }
        Self {
            total,
            verified,
            success_rate: if total == 0 { 0.0 } else { verified as f64 / total as f64 },
            failures,
            failed,
        }
    }
}

/// Run the pipeline over a batch. Rows come back in input order; failed
/// samples are counted in the report and left out of the dataset.
pub fn synthesize(
    samples: &[SeedSample],
    oracle: &dyn Oracle,
    registry: &ToolRegistry,
    cfg: &SynthesisConfig,
) -> (Vec<DatasetRow>, SynthesisReport) {
    let run = || -> Vec<Result<ComposedTrajectory, PipelineError>> {
        samples.par_iter().map(|s| process_sample(s, oracle, registry, cfg)).collect()
    };
    let outcomes = match rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            log::warn!("could not build thread pool ({e}); using the global pool");
            run()
        }
    };
    let rows = samples
        .iter()
        .zip(&outcomes)
        .filter_map(|(s, o)| o.as_ref().ok().map(|c| to_row(s, c)))
        .collect();
    let report = SynthesisReport::from_outcomes(samples.iter().zip(&outcomes).map(|(s, o)| (s.id.as_str(), o.as_ref().map(|_| ()))));
    (rows, report)
}
