//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists, the same shapes the JSON files use.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tooltrace::advantage::{self, toy, StdMode};
use tooltrace::lazy::{self, LazyConfig};
use tooltrace::parser::{self, ParseConfig, ParseError};
use tooltrace::pipeline::fixtures::{demo_batch, exchange_rate_registry, fixture_script};
use tooltrace::pipeline::{self, DatasetRow, ScriptedOracle, SynthesisConfig};
use tooltrace::reward::{self, RewardWeights};
use tooltrace::{RolloutGroup, TokenRecord, ToolCall, Trajectory};

fn invalid(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(invalid)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(invalid)
}

fn parse_raw(raw: &str) -> PyResult<Trajectory> {
    match parser::parse_output(raw, &ParseConfig::default()) {
        Ok(p) => Ok(p.trajectory),
        Err(ParseError::EmptyInput) => Ok(Trajectory::default()),
        Err(e) => Err(invalid(e)),
    }
}

/// Advantage settings; defaults match the library.
#[pyclass(name = "DAConfig", from_py_object)]
#[derive(Clone)]
pub struct PyDAConfig {
    inner: advantage::DAConfig,
}

#[pymethods]
impl PyDAConfig {
    #[new]
    #[pyo3(signature = (alpha=None, delta=None, zeta=None, epsilon_clip=None, kl_coef=None, std_mode=None, literal_eq7=false))]
    fn new(
        alpha: Option<f64>,
        delta: Option<f64>,
        zeta: Option<f64>,
        epsilon_clip: Option<f64>,
        kl_coef: Option<f64>,
        std_mode: Option<&str>,
        literal_eq7: bool,
    ) -> PyResult<Self> {
        let d = advantage::DAConfig::default();
        let std_mode = match std_mode {
            None => d.std_mode,
            Some("population") => StdMode::Population,
            Some("sample") => StdMode::Sample,
            Some(other) => return Err(invalid(format!("std_mode must be population or sample, got {other}"))),
        };
        let inner = advantage::DAConfig {
            alpha: alpha.unwrap_or(d.alpha),
            delta: delta.unwrap_or(d.delta),
            zeta: zeta.unwrap_or(d.zeta),
            epsilon_clip: epsilon_clip.unwrap_or(d.epsilon_clip),
            kl_coef: kl_coef.unwrap_or(d.kl_coef),
            std_mode,
            literal_eq7,
        };
        inner.validate().map_err(invalid)?;
        Ok(Self { inner })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn zeta(&self) -> f64 {
        self.inner.zeta
    }

    #[getter]
    fn kl_coef(&self) -> f64 {
        self.inner.kl_coef
    }

    /// Entropy advantage `min(alpha * h, delta)`.
    fn psi(&self, h: f64) -> f64 {
        advantage::psi(h, &self.inner)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "DAConfig(alpha={}, delta={}, zeta={}, epsilon_clip={}, kl_coef={})",
            c.alpha, c.delta, c.zeta, c.epsilon_clip, c.kl_coef
        )
    }
}

fn config_or_default(cfg: Option<PyDAConfig>) -> advantage::DAConfig {
    cfg.map(|c| c.inner).unwrap_or_default()
}

/// Parse a raw model output into `{raw, thoughts, calls, ...}`.
#[pyfunction]
fn parse_output<'py>(py: Python<'py>, raw: &str) -> PyResult<Bound<'py, PyAny>> {
    let parsed = parser::parse_output(raw, &ParseConfig::default()).map_err(invalid)?;
    to_py(py, &parsed.trajectory)
}

/// Reward breakdown for `raw` against ground-truth calls `[{name, args}]`.
#[pyfunction]
fn score<'py>(py: Python<'py>, raw: &str, ground_truth: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let gt: Vec<ToolCall> = from_py(ground_truth)?;
    let t = parse_raw(raw)?;
    to_py(py, &reward::total_reward_weighted(&t, &gt, &RewardWeights::default()))
}

/// Whether two calls are equal after canonicalizing their arguments.
#[pyfunction]
fn tool_call_equal(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<bool> {
    Ok(tooltrace::tool_call_equal(&from_py(a)?, &from_py(b)?))
}

/// Per-token advantage records for one group. `tokens[i]` holds rollout i's
/// `{logprob, entropy?}` records.
#[pyfunction]
#[pyo3(signature = (rewards, tokens, config=None))]
fn reshape_advantages<'py>(
    py: Python<'py>,
    rewards: Vec<f64>,
    tokens: &Bound<'py, PyAny>,
    config: Option<PyDAConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    let tokens: Vec<Vec<TokenRecord>> = from_py(tokens)?;
    let trajectories = tokens.into_iter().map(Trajectory::from_tokens).collect();
    let group = RolloutGroup::new("python", trajectories, rewards).map_err(invalid)?;
    let records = advantage::reshape_advantages(&group, &config_or_default(config)).map_err(invalid)?;
    to_py(py, &records)
}

/// Lazy-reasoning report for a raw output.
#[pyfunction]
#[pyo3(signature = (raw, min_tokens=None, min_reflections=None))]
fn detect_lazy<'py>(
    py: Python<'py>,
    raw: &str,
    min_tokens: Option<usize>,
    min_reflections: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let d = LazyConfig::default();
    let cfg = LazyConfig {
        min_tokens: min_tokens.unwrap_or(d.min_tokens),
        min_reflections: min_reflections.unwrap_or(d.min_reflections),
        lexicon: d.lexicon,
    };
    to_py(py, &lazy::detect_lazy(&parse_raw(raw)?, &cfg))
}

/// Run the toy-policy gradient suite.
#[pyfunction]
#[pyo3(signature = (seed=0, instances=20, config=None))]
fn gradcheck<'py>(py: Python<'py>, seed: u64, instances: usize, config: Option<PyDAConfig>) -> PyResult<Bound<'py, PyAny>> {
    let report = toy::run_gradcheck(seed, instances, &config_or_default(config)).map_err(invalid)?;
    to_py(py, &report)
}

/// Synthesize the built-in demo batch with the scripted oracle.
/// Returns `(rows, report)`.
#[pyfunction]
#[pyo3(signature = (seed=0, jobs=1))]
fn synthesize_demo<'py>(py: Python<'py>, seed: u64, jobs: usize) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let oracle = ScriptedOracle::new(fixture_script(), seed);
    let cfg = SynthesisConfig {
        jobs,
        ..SynthesisConfig::default()
    };
    let (rows, report) = py.detach(|| pipeline::synthesize(&demo_batch(), &oracle, &exchange_rate_registry(), &cfg));
    Ok((to_py(py, &rows)?, to_py(py, &report)?))
}

/// Re-verify one dataset row.
#[pyfunction]
fn verify_row(row: &Bound<'_, PyAny>) -> PyResult<bool> {
    let row: DatasetRow = from_py(row)?;
    Ok(pipeline::verify_row(&row, &ParseConfig::default()))
}

#[pymodule]
fn tooltrace_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDAConfig>()?;
    m.add_function(wrap_pyfunction!(parse_output, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(tool_call_equal, m)?)?;
    m.add_function(wrap_pyfunction!(reshape_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(detect_lazy, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_demo, m)?)?;
    m.add_function(wrap_pyfunction!(verify_row, m)?)?;
    Ok(())
}
