//! Trajectory synthesis: decompose a query into subtasks with a model oracle,
//! execute them against a simulated tool registry, compose the pieces into a
//! think-block trajectory and keep it only if it reproduces the reference
//! calls.

pub mod compose;
pub mod fixtures;
pub mod oracle;
pub mod plan;
pub mod prompt;
pub mod registry;
pub mod synth;

pub use compose::{ComposeTemplates, ComposedTrajectory, SubtaskResult, TemplateError};
pub use oracle::{GenParams, HttpOracle, NoiseModel, Oracle, OracleConfig, OracleError, ScriptFile, ScriptRule, ScriptedOracle};
pub use plan::{check_plan, parse_plan, Scenario, Subtask, SubtaskPlan};
pub use prompt::FewShot;
pub use registry::{RegistryError, RegistryFile, ToolRegistry};
pub use synth::{
    decompose, execute_parallel, execute_sequential, explain_irrelevant, process_sample, synthesize, verify, verify_row, DatasetRow,
    FailureKind, PipelineError, SeedSample, SynthesisConfig, SynthesisReport,
};
