use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use tooltrace::advantage::toy::{run_gradcheck, DECOMPOSITION_TOLERANCE, FD_TOLERANCE};
use tooltrace::advantage::{reshape_advantages, summarize, AdvantageRecord};
use tooltrace::lazy::{behavior_distribution, detect_lazy, LazyReport};
use tooltrace::parser::{parse_output, Diagnostic, ParseError};
use tooltrace::pipeline::fixtures::{demo_batch, exchange_rate_registry, fixture_script};
use tooltrace::pipeline::{
    synthesize as run_synthesis, verify_row, DatasetRow, GenParams, HttpOracle, Oracle, ScriptFile, ScriptedOracle, SeedSample,
    SynthesisConfig, ToolRegistry, FailureKind,
};
use tooltrace::reward::{total_reward_weighted, RewardBreakdown};
use tooltrace::{BehaviorCategory, RolloutGroup, TokenRecord, ToolCall, Trajectory};

use crate::config::{Emit, OracleKind, RunConfig};
use crate::io::{read_jsonl, Series, Sink};
use crate::Failure;

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

// ---------- score ----------

#[derive(Deserialize)]
struct ScoreInput {
    #[serde(default)]
    id: Json,
    raw: String,
    #[serde(alias = "calls", alias = "reference")]
    ground_truth: Vec<ToolCall>,
}

#[derive(Deserialize)]
struct GtInput {
    #[serde(default)]
    id: Json,
    #[serde(alias = "calls", alias = "reference")]
    ground_truth: Vec<ToolCall>,
}

#[derive(Deserialize)]
struct PredInput {
    #[serde(default)]
    id: Json,
    raw: String,
}

#[derive(Serialize)]
struct ScoreOutput {
    id: Json,
    #[serde(flatten)]
    reward: RewardBreakdown,
    calls: usize,
    diagnostics: Vec<Diagnostic>,
}

/// Pair predictions with ground truth by id, or by position when no ids are given.
fn join(gt: Vec<GtInput>, pred: Vec<PredInput>) -> Result<Vec<ScoreInput>, Failure> {
    if pred.iter().all(|p| p.id.is_null()) {
        if gt.len() != pred.len() {
            return Err(Failure::Invalid(format!("{} ground-truth rows but {} predictions", gt.len(), pred.len())));
        }
        return Ok(gt
            .into_iter()
            .zip(pred)
            .enumerate()
            .map(|(i, (g, p))| ScoreInput {
                id: if g.id.is_null() { json!(i) } else { g.id },
                raw: p.raw,
                ground_truth: g.ground_truth,
            })
            .collect());
    }
    let mut by_id: HashMap<String, Vec<ToolCall>> = HashMap::new();
    for g in gt {
        if by_id.insert(g.id.to_string(), g.ground_truth).is_some() {
            return Err(Failure::Invalid(format!("duplicate ground-truth id {}", g.id)));
        }
    }
    pred.into_iter()
        .map(|p| {
            let ground_truth = by_id
                .get(&p.id.to_string())
                .cloned()
                .ok_or_else(|| Failure::Invalid(format!("no ground truth for id {}", p.id)))?;
            Ok(ScoreInput {
                id: p.id,
                raw: p.raw,
                ground_truth,
            })
        })
        .collect()
}

pub fn score(cfg: &RunConfig) -> Result<(), Failure> {
    let rows = match (&cfg.io.gt, &cfg.io.pred) {
        (Some(gt), Some(pred)) => join(read_jsonl(Some(gt))?, read_jsonl(Some(pred))?)?,
        _ => read_jsonl(cfg.io.input.as_deref())?,
    };
    let parse = cfg.parse_config()?;
    let mut scored = Vec::with_capacity(rows.len());
    for row in rows {
        let (trajectory, diagnostics) = match parse_output(&row.raw, &parse) {
            Ok(p) => (p.trajectory, p.diagnostics),
            // an empty output is scored, not rejected
            Err(ParseError::EmptyInput) => (Trajectory::default(), Vec::new()),
            Err(e) => return Err(Failure::Invalid(e.to_string())),
        };
        let reward = total_reward_weighted(&trajectory, &row.ground_truth, &cfg.reward);
        scored.push(ScoreOutput {
            id: row.id,
            reward,
            calls: trajectory.calls.len(),
            diagnostics,
        });
    }
    log::info!("scored {} rows", scored.len());
    let means = [
        ("format", mean(scored.iter().map(|s| s.reward.format))),
        ("struct", mean(scored.iter().map(|s| s.reward.structure))),
        ("key", mean(scored.iter().map(|s| s.reward.key))),
        ("value", mean(scored.iter().map(|s| s.reward.value))),
        ("total", mean(scored.iter().map(|s| s.reward.total))),
    ];
    eprintln!("{:<8} {}", "rows", scored.len());
    for (name, m) in &means {
        eprintln!("{name:<8} {m:.4}");
    }

    let echo = cfg.echo();
    let mut sink = Sink::create(cfg.io.out.as_ref())?;
    match cfg.emit {
        Emit::Jsonl => {
            sink.json(&echo)?;
            for s in &scored {
                sink.json(s)?;
            }
            let summary: BTreeMap<&str, f64> = means.iter().copied().collect();
            sink.json(&json!({"summary": {"rows": scored.len(), "mean": summary}}))?;
        }
        Emit::Csv => {
            let table: Vec<Vec<String>> = scored
                .iter()
                .map(|s| {
                    let r = &s.reward;
                    vec![id_text(&s.id), r.format.to_string(), r.structure.to_string(), r.key.to_string(), r.value.to_string(), r.total.to_string()]
                })
                .collect();
            sink.csv(&echo, &["id", "format", "struct", "key", "value", "total"], &table)?;
        }
        Emit::Plots => {
            let mut series = Series::default();
            for (name, m) in &means {
                series.push("mean", name, *m);
            }
            let mut hist: BTreeMap<i64, usize> = BTreeMap::new();
            for s in &scored {
                // quarter-point buckets
                *hist.entry((s.reward.total * 4.0).round() as i64).or_default() += 1;
            }
            for (bucket, n) in hist {
                series.push("total_hist", bucket as f64 / 4.0, n as f64);
            }
            series.write(&mut sink, &echo)?;
        }
    }
    sink.finish()
}

fn id_text(id: &Json) -> String {
    match id {
        Json::String(s) => s.clone(),
        Json::Null => String::new(),
        other => other.to_string(),
    }
}

// ---------- advantage ----------

#[derive(Deserialize)]
struct RolloutInput {
    reward: f64,
    #[serde(default)]
    tokens: Vec<TokenRecord>,
}

#[derive(Deserialize)]
struct GroupInput {
    prompt_id: String,
    rollouts: Vec<RolloutInput>,
}

#[derive(Serialize)]
struct TokenOutput<'a> {
    prompt_id: &'a str,
    rollout: usize,
    position: usize,
    #[serde(flatten)]
    record: AdvantageRecord,
}

pub fn advantage(cfg: &RunConfig) -> Result<(), Failure> {
    let groups: Vec<GroupInput> = read_jsonl(cfg.io.input.as_deref())?;
    let mut results = Vec::with_capacity(groups.len());
    for g in groups {
        let (trajectories, rewards): (Vec<_>, Vec<_>) = g.rollouts.into_iter().map(|r| (Trajectory::from_tokens(r.tokens), r.reward)).unzip();
        let group = RolloutGroup::new(g.prompt_id.clone(), trajectories, rewards).map_err(|e| Failure::Invalid(format!("{}: {e}", g.prompt_id)))?;
        let records = reshape_advantages(&group, &cfg.advantage).map_err(|e| Failure::Invalid(format!("{}: {e}", g.prompt_id)))?;
        let summary = summarize(&group, &records, &cfg.advantage);
        results.push((g.prompt_id, records, summary));
    }
    let tokens: usize = results.iter().map(|r| r.2.tokens).sum();
    let entropy_tokens: f64 = results.iter().map(|r| r.2.entropy_fraction * r.2.tokens as f64).sum();
    let degenerate = results.iter().filter(|r| r.2.degenerate).count();
    let fraction = if tokens == 0 { 0.0 } else { entropy_tokens / tokens as f64 };
    eprintln!("{:<18} {}", "groups", results.len());
    eprintln!("{:<18} {degenerate}", "degenerate");
    eprintln!("{:<18} {tokens}", "tokens");
    eprintln!("{:<18} {fraction:.4}", "entropy-sourced");

    let echo = cfg.echo();
    let mut sink = Sink::create(cfg.io.out.as_ref())?;
    match cfg.emit {
        Emit::Jsonl => {
            sink.json(&echo)?;
            for (prompt_id, records, summary) in &results {
                for (i, row) in records.iter().enumerate() {
                    for (t, record) in row.iter().enumerate() {
                        sink.json(&TokenOutput {
                            prompt_id,
                            rollout: i,
                            position: t,
                            record: *record,
                        })?;
                    }
                }
                sink.json(&json!({ "group": summary }))?;
            }
            sink.json(&json!({"summary": {"groups": results.len(), "degenerate": degenerate, "tokens": tokens, "entropy_fraction": fraction}}))?;
        }
        Emit::Csv => {
            let mut table = Vec::new();
            for (prompt_id, records, _) in &results {
                for (i, row) in records.iter().enumerate() {
                    for (t, r) in row.iter().enumerate() {
                        table.push(vec![
                            prompt_id.clone(),
                            i.to_string(),
                            t.to_string(),
                            r.a_raw.to_string(),
                            r.a_hat.to_string(),
                            json!(r.source).as_str().unwrap_or_default().to_string(),
                            r.entropy.to_string(),
                        ]);
                    }
                }
            }
            sink.csv(&echo, &["prompt_id", "rollout", "position", "a_raw", "a_hat", "source", "entropy"], &table)?;
        }
        Emit::Plots => {
            let mut series = Series::default();
            for (prompt_id, _, s) in &results {
                series.push("reward_std", prompt_id, s.std);
                series.push("entropy_fraction", prompt_id, s.entropy_fraction);
            }
            series.write(&mut sink, &echo)?;
        }
    }
    sink.finish()
}

// ---------- gradcheck ----------

pub fn gradcheck(cfg: &RunConfig) -> Result<(), Failure> {
    let report = run_gradcheck(cfg.seed, cfg.instances, &cfg.advantage).map_err(|e| Failure::Invalid(e.to_string()))?;
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let factor_dev = report.high_low_factor / report.high_low_expected - 1.0;
    let lines = [
        (
            report.gradient_ok,
            format!(
                "finite differences: max relative error GRPO {:.2e}, DA-GRPO {:.2e} (tolerance {FD_TOLERANCE:.0e}) over {} instances",
                report.max_rel_error_grpo, report.max_rel_error_dagrpo, report.instances
            ),
        ),
        (
            report.non_stagnation_failures == 0 && report.max_degenerate_grpo_norm == 0.0,
            format!(
                "non-stagnation: {} degenerate groups checked, {} failures, max GRPO gradient norm {:e}",
                report.non_stagnation_checked, report.non_stagnation_failures, report.max_degenerate_grpo_norm
            ),
        ),
        (
            report.direction_failures == 0 && factor_dev.abs() <= 0.05,
            format!(
                "high-entropy direction: {} token pairs, {} failures; factor {:.4} vs {:.4} ({:+.2}%)",
                report.direction_pairs_checked,
                report.direction_failures,
                report.high_low_factor,
                report.high_low_expected,
                factor_dev * 100.0
            ),
        ),
        (
            report.decomposition_ok,
            format!(
                "decomposition: max |grad DA - grad GRPO - grad entropy term| {:.2e} (tolerance {DECOMPOSITION_TOLERANCE:.0e})",
                report.max_decomposition_error
            ),
        ),
    ];
    for (ok, text) in &lines {
        eprintln!("{} {text}", mark(*ok));
    }

    let echo = cfg.echo();
    let mut sink = Sink::create(cfg.io.out.as_ref())?;
    match cfg.emit {
        Emit::Jsonl => {
            sink.json(&echo)?;
            sink.json(&json!({"report": report, "passed": report.passed()}))?;
        }
        Emit::Csv => {
            let table: Vec<Vec<String>> = lines.iter().map(|(ok, text)| vec![mark(*ok).to_string(), text.clone()]).collect();
            sink.csv(&echo, &["status", "check"], &table)?;
        }
        Emit::Plots => {
            let mut series = Series::default();
            series.push("fd_relative_error", "grpo", report.max_rel_error_grpo);
            series.push("fd_relative_error", "dagrpo", report.max_rel_error_dagrpo);
            series.push("high_low_factor", "measured", report.high_low_factor);
            series.push("high_low_factor", "expected", report.high_low_expected);
            series.push("decomposition_error", "max", report.max_decomposition_error);
            series.write(&mut sink, &echo)?;
        }
    }
    sink.finish()?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Invalid("gradient checks failed".into()))
    }
}

// ---------- analyze ----------

#[derive(Deserialize)]
struct TraceInput {
    #[serde(default)]
    id: Json,
    raw: String,
    #[serde(default)]
    tag: Option<String>,
}

#[derive(Serialize)]
struct TraceOutput {
    id: Json,
    #[serde(skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    #[serde(flatten)]
    report: LazyReport,
    thoughts: usize,
}

#[derive(Serialize, Default)]
struct TagStats {
    n: usize,
    lazy: usize,
    ratio: f64,
}

pub fn analyze(cfg: &RunConfig) -> Result<(), Failure> {
    let inputs: Vec<TraceInput> = read_jsonl(cfg.io.input.as_deref())?;
    let parse = cfg.parse_config()?;
    let lazy = cfg.lazy_config()?;
    let mut trajectories = Vec::with_capacity(inputs.len());
    let mut outputs = Vec::with_capacity(inputs.len());
    for t in inputs {
        let trajectory = match parse_output(&t.raw, &parse) {
            Ok(p) => p.trajectory,
            Err(ParseError::EmptyInput) => Trajectory::default(),
            Err(e) => return Err(Failure::Invalid(e.to_string())),
        };
        let report = detect_lazy(&trajectory, &lazy);
        outputs.push(TraceOutput {
            id: t.id,
            tag: t.tag,
            report,
            thoughts: trajectory.thoughts.len(),
        });
        trajectories.push(trajectory);
    }
    let mut histogram: BTreeMap<BehaviorCategory, usize> = BehaviorCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for o in &outputs {
        for (c, n) in &o.report.behavior_histogram {
            *histogram.entry(*c).or_default() += n;
        }
    }
    let distribution = behavior_distribution(&trajectories);
    let mut by_tag: BTreeMap<String, TagStats> = BTreeMap::new();
    for o in &outputs {
        let s = by_tag.entry(o.tag.clone().unwrap_or_else(|| "all".into())).or_default();
        s.n += 1;
        s.lazy += usize::from(o.report.is_lazy);
    }
    for s in by_tag.values_mut() {
        s.ratio = s.lazy as f64 / s.n as f64;
    }
    let lazy_total = outputs.iter().filter(|o| o.report.is_lazy).count();
    eprintln!("{:<20} {}", "trajectories", outputs.len());
    eprintln!("{:<20} {lazy_total}", "lazy");
    for (c, n) in &histogram {
        eprintln!("{:<20} {n}", c.as_str());
    }

    let echo = cfg.echo();
    let mut sink = Sink::create(cfg.io.out.as_ref())?;
    match cfg.emit {
        Emit::Jsonl => {
            sink.json(&echo)?;
            for o in &outputs {
                sink.json(o)?;
            }
            sink.json(&json!({"summary": {
                "trajectories": outputs.len(),
                "lazy": lazy_total,
                "histogram": histogram,
                "distribution": distribution,
                "by_tag": by_tag,
            }}))?;
        }
        Emit::Csv => {
            let mut header = vec!["id", "tag", "token_count", "reflection_count", "is_lazy"];
            header.extend(BehaviorCategory::ALL.iter().map(|c| c.as_str()));
            let table: Vec<Vec<String>> = outputs
                .iter()
                .map(|o| {
                    let mut row = vec![
                        id_text(&o.id),
                        o.tag.clone().unwrap_or_default(),
                        o.report.token_count.to_string(),
                        o.report.reflection_count.to_string(),
                        o.report.is_lazy.to_string(),
                    ];
                    row.extend(BehaviorCategory::ALL.iter().map(|c| o.report.behavior_histogram[c].to_string()));
                    row
                })
                .collect();
            sink.csv(&echo, &header, &table)?;
        }
        Emit::Plots => {
            let mut series = Series::default();
            for (tag, s) in &by_tag {
                series.push("lazy_ratio", tag, s.ratio);
            }
            for (c, f) in &distribution {
                series.push("behavior", c.as_str(), *f);
            }
            series.write(&mut sink, &echo)?;
        }
    }
    sink.finish()
}

// ---------- synthesize ----------

fn oracle(cfg: &RunConfig) -> Result<Box<dyn Oracle>, Failure> {
    match cfg.oracle.kind {
        OracleKind::Scripted => {
            let script = match &cfg.oracle.script {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<ScriptFile>(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?
                }
                None => fixture_script(),
            };
            Ok(Box::new(ScriptedOracle::new(script, cfg.seed)))
        }
        OracleKind::Http => Ok(Box::new(HttpOracle::new(cfg.oracle.http.clone()))),
    }
}

fn registry(cfg: &RunConfig) -> Result<ToolRegistry, Failure> {
    match &cfg.registry {
        Some(p) => ToolRegistry::load(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => Ok(exchange_rate_registry()),
    }
}

pub fn synthesize(cfg: &RunConfig) -> Result<(), Failure> {
    let seeds: Vec<SeedSample> = match &cfg.io.input {
        Some(p) => read_jsonl(Some(p))?,
        None => demo_batch(),
    };
    for s in &seeds {
        s.context.validate().map_err(|e| Failure::Invalid(format!("{}: {e}", s.id)))?;
    }
    let oracle = oracle(cfg)?;
    let registry = registry(cfg)?;
    let gen = match cfg.oracle.kind {
        OracleKind::Http => GenParams {
            temperature: Some(cfg.oracle.http.temperature),
            max_tokens: cfg.oracle.http.max_tokens,
        },
        OracleKind::Scripted => GenParams::default(),
    };
    let synth = SynthesisConfig {
        jobs: cfg.jobs,
        gen,
        parse: cfg.parse_config()?,
        ..SynthesisConfig::default()
    };
    let (rows, report) = run_synthesis(&seeds, oracle.as_ref(), &registry, &synth);
    eprintln!("{:<16} {}", "samples", report.total);
    eprintln!("{:<16} {}", "verified", report.verified);
    eprintln!("{:<16} {:.4}", "success rate", report.success_rate);
    for (kind, n) in report.failures.iter().filter(|(_, n)| **n > 0) {
        eprintln!("{:<16} {n}", json!(kind).as_str().unwrap_or_default());
    }

    let mut out = Sink::create(cfg.io.out.as_ref())?;
    for row in &rows {
        out.json(row)?;
    }
    out.finish()?;

    let echo = cfg.echo();
    let mut rep = match &cfg.io.report {
        Some(p) => Sink::create(Some(p))?,
        None => Sink::stderr(),
    };
    match cfg.emit {
        Emit::Jsonl => {
            rep.json(&echo)?;
            rep.json(&json!({ "report": report }))?;
        }
        Emit::Csv => {
            let mut failed: HashMap<&str, &FailureKind> = HashMap::new();
            for f in &report.failed {
                failed.insert(&f.id, &f.kind);
            }
            let table: Vec<Vec<String>> = seeds
                .iter()
                .map(|s| {
                    let kind = failed.get(s.id.as_str()).map(|k| json!(k).as_str().unwrap_or_default().to_string());
                    vec![s.id.clone(), kind.is_none().to_string(), kind.unwrap_or_default()]
                })
                .collect();
            rep.csv(&echo, &["id", "verified", "failure"], &table)?;
        }
        Emit::Plots => {
            let mut series = Series::default();
            series.push("success_rate", "all", report.success_rate);
            for (kind, n) in &report.failures {
                series.push("failures", json!(kind).as_str().unwrap_or_default(), *n as f64);
            }
            series.write(&mut rep, &echo)?;
        }
    }
    rep.finish()?;
    if report.failures.get(&FailureKind::OracleUnavailable).copied().unwrap_or(0) > 0 {
        return Err(Failure::Io(format!("{} samples failed on oracle errors", report.failures[&FailureKind::OracleUnavailable])));
    }
    Ok(())
}

// ---------- verify ----------

pub fn verify(cfg: &RunConfig) -> Result<(), Failure> {
    let rows: Vec<DatasetRow> = read_jsonl(cfg.io.input.as_deref())?;
    let parse = cfg.parse_config()?;
    let results: Vec<(String, bool)> = rows.iter().map(|r| (r.id.clone(), verify_row(r, &parse))).collect();
    let passed = results.iter().filter(|r| r.1).count();
    eprintln!("{:<10} {}", "rows", results.len());
    eprintln!("{:<10} {passed}", "verified");

    let echo = cfg.echo();
    let mut sink = Sink::create(cfg.io.out.as_ref())?;
    match cfg.emit {
        Emit::Jsonl => {
            sink.json(&echo)?;
            for (id, ok) in &results {
                sink.json(&json!({"id": id, "verified": ok}))?;
            }
            sink.json(&json!({"summary": {"rows": results.len(), "verified": passed}}))?;
        }
        Emit::Csv => {
            let table: Vec<Vec<String>> = results.iter().map(|(id, ok)| vec![id.clone(), ok.to_string()]).collect();
            sink.csv(&echo, &["id", "verified"], &table)?;
        }
        Emit::Plots => {
            let mut series = Series::default();
            series.push("verified", "true", passed as f64);
            series.push("verified", "false", (results.len() - passed) as f64);
            series.write(&mut sink, &echo)?;
        }
    }
    sink.finish()?;
    if passed == results.len() {
        Ok(())
    } else {
        Err(Failure::Invalid(format!("{} of {} rows failed verification", results.len() - passed, results.len())))
    }
}
