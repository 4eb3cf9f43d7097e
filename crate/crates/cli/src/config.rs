//! Effective run configuration: defaults, then the `--config` file, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tooltrace::advantage::{DAConfig, StdMode};
use tooltrace::lazy::LazyConfig;
use tooltrace::parser::{CallSyntax, ParseConfig};
use tooltrace::pipeline::OracleConfig;
use tooltrace::reward::RewardWeights;
use tooltrace::BehaviorLexicon;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    #[default]
    Jsonl,
    Csv,
    Plots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LazySettings {
    pub min_tokens: usize,
    pub min_reflections: usize,
    /// Behavior lexicon file; the built-in lexicon when absent.
    pub lexicon: Option<PathBuf>,
}

impl Default for LazySettings {
    fn default() -> Self {
        let d = LazyConfig::default();
        Self {
            min_tokens: d.min_tokens,
            min_reflections: d.min_reflections,
            lexicon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParseSettings {
    pub think_open: String,
    pub think_close: String,
    pub call_syntaxes: Vec<CallSyntax>,
}

impl Default for ParseSettings {
    fn default() -> Self {
        let d = ParseConfig::default();
        Self {
            think_open: d.think_open,
            think_close: d.think_close,
            call_syntaxes: d.call_syntaxes.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub kind: OracleKind,
    /// Script file for the scripted oracle; the built-in fixture script when absent.
    pub script: Option<PathBuf>,
    pub http: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSettings {
    pub input: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub advantage: DAConfig,
    pub reward: RewardWeights,
    pub lazy: LazySettings,
    pub parse: ParseSettings,
    pub oracle: OracleSettings,
    /// Tool registry file; the built-in travel registry when absent.
    pub registry: Option<PathBuf>,
    pub io: IoSettings,
    pub seed: u64,
    pub jobs: usize,
    pub instances: usize,
    pub emit: Emit,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            advantage: DAConfig::default(),
            reward: RewardWeights::default(),
            lazy: LazySettings::default(),
            parse: ParseSettings::default(),
            oracle: OracleSettings::default(),
            registry: None,
            io: IoSettings::default(),
            seed: 0,
            jobs: 4,
            instances: 50,
            emit: Emit::Jsonl,
        }
    }
}

/// Flag values that override the file. `None` leaves the file value alone.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// JSON run configuration; a `{"config": ...}` header line from any output works too.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Entropy scale for reshaped advantages.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Cap on the entropy advantage.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Degeneracy threshold.
    #[arg(long, global = true)]
    pub zeta: Option<f64>,
    #[arg(long, global = true)]
    pub eps_clip: Option<f64>,
    #[arg(long, global = true)]
    pub kl_coef: Option<f64>,
    #[arg(long, global = true, value_name = "population|sample")]
    pub std: Option<StdMode>,
    /// Replace every advantage below zeta, not only near-zero ones.
    #[arg(long, global = true)]
    pub literal_eq7: bool,
    #[arg(long, global = true)]
    pub min_tokens: Option<usize>,
    #[arg(long, global = true)]
    pub min_reflections: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub oracle: Option<OracleKind>,
    /// Script file for the scripted oracle.
    #[arg(long, global = true, value_name = "PATH")]
    pub script: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub registry: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub emit: Option<Emit>,
    /// Input JSONL ("-" for stdin).
    #[arg(long, short, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, short, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
    }

    /// A bare config object, or the first line of an output carrying `{"config": ...}`.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let mut value: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(_) => serde_json::from_str(first).map_err(|e| e.to_string())?,
        };
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| e.to_string())
    }

    pub fn resolve(o: &Overrides) -> Result<Self, Failure> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let a = &mut c.advantage;
        set(&mut a.alpha, o.alpha);
        set(&mut a.delta, o.delta);
        set(&mut a.zeta, o.zeta);
        set(&mut a.epsilon_clip, o.eps_clip);
        set(&mut a.kl_coef, o.kl_coef);
        set(&mut a.std_mode, o.std);
        if o.literal_eq7 {
            a.literal_eq7 = true;
        }
        set(&mut c.lazy.min_tokens, o.min_tokens);
        set(&mut c.lazy.min_reflections, o.min_reflections);
        set(&mut c.oracle.kind, o.oracle);
        if o.script.is_some() {
            c.oracle.script = o.script.clone();
        }
        if o.registry.is_some() {
            c.registry = o.registry.clone();
        }
        set(&mut c.jobs, o.jobs);
        set(&mut c.seed, o.seed);
        set(&mut c.emit, o.emit);
        if o.input.is_some() {
            c.io.input = o.input.clone();
        }
        if o.out.is_some() {
            c.io.out = o.out.clone();
        }
        c.advantage.validate().map_err(Failure::Invalid)?;
        c.parse_config()?;
        Ok(c)
    }

    pub fn lexicon(&self) -> Result<BehaviorLexicon, Failure> {
        match &self.lazy.lexicon {
            Some(p) => BehaviorLexicon::load(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
            None => Ok(BehaviorLexicon::default()),
        }
    }

    pub fn parse_config(&self) -> Result<ParseConfig, Failure> {
        let cfg = ParseConfig {
            call_syntaxes: self.parse.call_syntaxes.iter().copied().collect(),
            think_open: self.parse.think_open.clone(),
            think_close: self.parse.think_close.clone(),
            lexicon: self.lexicon()?,
        };
        cfg.validate().map_err(|e| Failure::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn lazy_config(&self) -> Result<LazyConfig, Failure> {
        Ok(LazyConfig {
            min_tokens: self.lazy.min_tokens,
            min_reflections: self.lazy.min_reflections,
            lexicon: self.lexicon()?,
        })
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({ "config": self })
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
