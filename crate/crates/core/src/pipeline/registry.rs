//! Simulated tool environment: canned responses keyed by canonical arguments.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ParamSpec, ToolSpec};
use crate::value::{ToolCall, Value};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RegistryError {
    #[error("tool {0:?} is not registered")]
    ToolNotFound(String),
    #[error("bad arguments for {tool:?}: {reason}")]
    ToolArg { tool: String, reason: String },
    #[error("registry file: {0}")]
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedResponse {
    pub args: IndexMap<String, Value>,
    pub response: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolEntry {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default)]
    pub responses: Vec<CannedResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

/// On-disk form: `{tool_name: {description, params, responses, default}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegistryFile(pub IndexMap<String, ToolEntry>);

#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    specs: IndexMap<String, ToolSpec>,
    table: IndexMap<String, IndexMap<String, Value>>,
    defaults: IndexMap<String, Value>,
    file: RegistryFile,
}

fn args_key(args: &IndexMap<String, Value>) -> String {
    Value::Map(args.clone()).canonical_key()
}

fn check_args(spec: &ToolSpec, args: &IndexMap<String, Value>) -> Result<(), RegistryError> {
    let err = |reason: String| RegistryError::ToolArg {
        tool: spec.name.clone(),
        reason,
    };
    for p in spec.params.iter().filter(|p| p.required) {
        if !args.contains_key(&p.key) {
            return Err(err(format!("missing required parameter {:?}", p.key)));
        }
    }
    for k in args.keys() {
        if !spec.params.iter().any(|p| &p.key == k) {
            return Err(err(format!("unknown parameter {k:?}")));
        }
    }
    Ok(())
}

impl ToolRegistry {
    pub fn from_file(file: RegistryFile) -> Result<Self, RegistryError> {
        let mut reg = Self::default();
        for (name, entry) in &file.0 {
            let spec = ToolSpec {
                name: name.clone(),
                description: entry.description.clone(),
                params: entry.params.clone(),
            };
            spec.validate().map_err(|e| RegistryError::File(e.to_string()))?;
            let mut table = IndexMap::new();
            for canned in &entry.responses {
                check_args(&spec, &canned.args).map_err(|e| RegistryError::File(e.to_string()))?;
                table.insert(args_key(&canned.args), canned.response.clone());
            }
            if let Some(d) = &entry.default {
                reg.defaults.insert(name.clone(), d.clone());
            }
            reg.table.insert(name.clone(), table);
            reg.specs.insert(name.clone(), spec);
        }
        reg.file = file;
        Ok(reg)
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = serde_json::from_str(text).map_err(|e| RegistryError::File(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_file(&self) -> &RegistryFile {
        &self.file
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.specs.values()
    }

    pub fn spec(&self, name: &str) -> Option<&ToolSpec> {
        self.specs.get(name)
    }

    /// Observation for a call: the canned response for its canonical
    /// arguments, else the tool's default.
    pub fn execute(&self, call: &ToolCall) -> Result<Value, RegistryError> {
        let spec = self
            .specs
            .get(&call.name)
            .ok_or_else(|| RegistryError::ToolNotFound(call.name.clone()))?;
        check_args(spec, &call.args)?;
        let canonical: IndexMap<String, Value> = call.args.iter().map(|(k, v)| (k.clone(), v.canonicalize())).collect();
        if let Some(v) = self.table[&call.name].get(&args_key(&canonical)) {
            return Ok(v.clone());
        }
        self.defaults.get(&call.name).cloned().ok_or_else(|| RegistryError::ToolArg {
            tool: call.name.clone(),
            reason: format!("no canned response for {}", args_key(&call.args)),
        })
    }
}
