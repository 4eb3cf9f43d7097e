//! Tool-use reasoning traces: parsing, reward scoring, entropy-aware GRPO
//! advantages, lazy-reasoning detection and decomposition-based trajectory
//! synthesis.

pub mod advantage;
pub mod lazy;
pub mod lexicon;
pub mod parser;
pub mod pipeline;
pub mod reward;
pub mod types;
pub mod value;

use thiserror::Error;

pub use lexicon::BehaviorLexicon;
pub use types::{BehaviorCategory, ChatMessage, Context, ParamSpec, Role, RolloutGroup, TokenRecord, ToolSpec, Thought, Trajectory};
pub use value::{canonicalize_value, tool_call_equal, ToolCall, Value};

/// Errors raised by the shared domain types.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid tool name {0:?}: must be non-empty and contain no whitespace")]
    InvalidToolName(String),
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error("group needs at least 2 rollouts, got {0}")]
    GroupTooSmall(usize),
    #[error("group has {trajectories} trajectories but {rewards} rewards")]
    GroupShape { trajectories: usize, rewards: usize },
    #[error("duplicate tool {0:?} in context")]
    DuplicateTool(String),
    #[error("duplicate parameter {key:?} in tool {tool:?}")]
    DuplicateParam { tool: String, key: String },
    #[error("unknown behavior category {0:?}")]
    UnknownCategory(String),
    #[error("lexicon: {0}")]
    Lexicon(String),
}
