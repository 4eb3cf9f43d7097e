//! Prompt rendering for decomposition, subtask execution and explanations.
//!
//! Each prompt kind carries a fixed marker line so a scripted oracle can tell
//! them apart without a side channel.

use serde::{Deserialize, Serialize};

use crate::types::{ChatMessage, Context, Role};
use crate::value::{render_bracket_calls, ToolCall};

pub const DECOMPOSITION_MARKER: &str = "You are a task decomposition expert.";
pub const REFERENCE_LABEL: &str = "5. Final Tool Invocation Results:";
pub const NO_REFERENCE: &str = "(not provided)";
pub const SUBTASK_MARKER: &str = "Current subtask";
pub const EXPLANATION_MARKER: &str = "cannot be decomposed into tool calls";
pub const RETRY_MARKER: &str = "Your previous output could not be parsed.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub input: String,
    pub output: String,
}

/// Built-in demonstrations covering the three scenarios.
pub fn default_few_shots() -> Vec<FewShot> {
    vec![
        FewShot {
            input: "Query: Book the cheapest flight from SFO to JFK on 2024-05-01 and email me the confirmation.\n\
                    Final Tool Invocation Results:[search_flights(origin=\"SFO\", destination=\"JFK\", date=\"2024-05-01\"), book_flight(flight_id=\"UA100\"), send_email(subject=\"Flight confirmation\")]"
                .into(),
            output: r#"{"scenario": "sequential", "subtasks": [{"step": 1, "description": "Search flights from SFO to JFK on 2024-05-01"}, {"step": 2, "description": "Book the cheapest flight found in step 1"}, {"step": 3, "description": "Email the booking confirmation to the user"}]}"#.into(),
        },
        FewShot {
            input: "Query: What is the weather in Paris and in Tokyo right now?\n\
                    Final Tool Invocation Results:[get_weather(city=\"Paris\"), get_weather(city=\"Tokyo\")]"
                .into(),
            output: r#"{"scenario": "parallel", "subtasks": [{"step": 1, "description": "Get the current weather in Paris"}, {"step": 2, "description": "Get the current weather in Tokyo"}]}"#.into(),
        },
        FewShot {
            input: "Query: Hi there, how are you today?\nFinal Tool Invocation Results:[]".into(),
            output: r#"{"scenario": "irrelevant", "subtasks": []}"#.into(),
        },
    ]
}

fn tool_list(ctx: &Context) -> String {
    let items: Vec<serde_json::Value> = ctx
        .tools
        .iter()
        .map(|t| serde_json::json!({"name": t.name, "description": t.description}))
        .collect();
    serde_json::Value::Array(items).to_string()
}

fn history(ctx: &Context) -> String {
    serde_json::to_string(&ctx.history).unwrap_or_else(|_| "[]".into())
}

/// The decomposition prompt. `reference = None` leaves the final tool
/// invocations out, for pseudo-label style decomposition.
pub fn decomposition_prompt(ctx: &Context, reference: Option<&[ToolCall]>, few_shots: &[FewShot]) -> String {
    let reference = match reference {
        Some(calls) => render_bracket_calls(calls),
        None => NO_REFERENCE.to_string(),
    };
    let mut out = format!(
        "{DECOMPOSITION_MARKER} Now you need to reverse-engineer the process of breaking down complex queries into subtasks based on the given information.\n\n\
         ###Input Information:\n\
         1. System Policy:{policy}\n\
         2. Available Tool List:{tools}\n\
         3. Chat History:{history}\n\
         4. Query:{query}\n\
         {REFERENCE_LABEL}{reference}\n\n\
         ## Task Requirements:\n\
         Based on the above information, please reverse-engineer a reasonable subtask decomposition process based on Query and Chat History. \
         Just output the subtask list in following format. Do not include information in the subtask description that does not exist in the chat history and query. \
         Use one subtask per tool invocation. Set \"scenario\" to \"sequential\" when a subtask needs the output of the previous one, \"parallel\" when the subtasks are independent, \
         and \"irrelevant\" with an empty subtask list when no tool applies.\n\n\
         ## Output Format:\n\
         {{\"scenario\": \"sequential|parallel|irrelevant\", \"subtasks\": [{{\"step\": 1, \"description\": Subtask 1}}, {{\"step\": 2, \"description\": Subtask 2}}...]}}\n",
        policy = ctx.policy,
        tools = tool_list(ctx),
        history = history(ctx),
        query = ctx.query,
    );
    for (i, shot) in few_shots.iter().enumerate() {
        out.push_str(&format!("\n<example_{n}>\n{}\nOutput: {}\n</example_{n}>\n", shot.input, shot.output, n = i + 1));
    }
    out.push_str("\nPlease begin the analysis:");
    out
}

/// Re-issue a prompt after an unparseable answer.
pub fn retry_prompt(original: &str) -> String {
    format!("{RETRY_MARKER} Answer again using exactly the required output format.\n\n{original}")
}

/// Starting state: system turn with policy and tools, prior history, query.
pub fn initial_messages(ctx: &Context) -> Vec<ChatMessage> {
    let mut system = ctx.policy.clone();
    if !ctx.tools.is_empty() {
        if !system.is_empty() {
            system.push_str("\n\n");
        }
        system.push_str("Available tools: ");
        system.push_str(&serde_json::to_string(&ctx.tools).unwrap_or_default());
    }
    let mut out = Vec::new();
    if !system.is_empty() {
        out.push(ChatMessage::system(system));
    }
    out.extend(ctx.history.iter().cloned());
    out.push(ChatMessage::user(ctx.query.clone()));
    out
}

pub fn subtask_prompt(step: usize, description: &str) -> String {
    format!(
        "{SUBTASK_MARKER} {step}: {description}\n\
         Think it through inside <think></think>, then output the tool call for this subtask only, as [func_name(param=value)]."
    )
}

pub fn explanation_prompt() -> String {
    format!(
        "The request above {EXPLANATION_MARKER}. Explain briefly why none of the available tools is needed to answer it."
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Decomposition { has_reference: bool, has_few_shots: bool },
    Subtask,
    Explanation,
    Other,
}

impl PromptKind {
    pub fn detect(text: &str) -> Self {
        if text.contains(DECOMPOSITION_MARKER) {
            let has_reference = reference_text(text).is_some_and(|r| r != NO_REFERENCE);
            PromptKind::Decomposition {
                has_reference,
                has_few_shots: text.contains("<example_1>"),
            }
        } else if text.starts_with(SUBTASK_MARKER) {
            PromptKind::Subtask
        } else if text.contains(EXPLANATION_MARKER) {
            PromptKind::Explanation
        } else {
            PromptKind::Other
        }
    }
}

/// Text after the reference label on its line.
pub fn reference_text(prompt: &str) -> Option<&str> {
    let start = prompt.find(REFERENCE_LABEL)? + REFERENCE_LABEL.len();
    let rest = &prompt[start..];
    Some(rest.split('\n').next().unwrap_or(rest).trim())
}

pub fn last_user_message(messages: &[ChatMessage]) -> Option<&str> {
    messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str())
}
