//! Composite tool-call reward: format + structure + key + value.
//!
//! Key and value scores are averaged over a key universe built per aligned
//! call pair: the ground-truth keys followed by any extra keys the aligned
//! prediction carries. Extra predicted keys therefore cost score, which keeps
//! a perfect total equivalent to exact call matching.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::parser::{parse_output, ParseConfig, ParseError};
use crate::types::Trajectory;
use crate::value::{ToolCall, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    #[serde(rename = "struct")]
    pub structure: f64,
    pub key: f64,
    pub value: f64,
    pub total: f64,
}

/// Per-component multipliers applied when forming `total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub format: f64,
    #[serde(rename = "struct")]
    pub structure: f64,
    pub key: f64,
    pub value: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            format: 1.0,
            structure: 1.0,
            key: 1.0,
            value: 1.0,
        }
    }
}

/// Ground-truth index → matched prediction index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallAlignment {
    pub pairs: Vec<(usize, Option<usize>)>,
}

impl CallAlignment {
    pub fn pred_for(&self, gt_index: usize) -> Option<usize> {
        self.pairs.iter().find(|(g, _)| *g == gt_index).and_then(|(_, p)| *p)
    }
}

const FORMAT_OPEN: &str = "<think>\n";
const FORMAT_CLOSE: &str = "\n</think>\n\n";

/// 1 iff `raw` is `<think>\n` .* `\n</think>\n\n` followed by a non-empty answer.
pub fn format_matches(raw: &str) -> bool {
    let Some(body) = raw.strip_prefix(FORMAT_OPEN) else {
        return false;
    };
    // the first close leaves the longest answer
    match body.find(FORMAT_CLOSE) {
        Some(i) => !body[i + FORMAT_CLOSE.len()..].is_empty(),
        None => false,
    }
}

pub fn format_reward(t: &Trajectory) -> f64 {
    if format_matches(&t.raw) {
        1.0
    } else {
        0.0
    }
}

/// Name-first alignment in two passes.
///
/// Same-name pairs are placed first: within each tool name the ground-truth
/// calls take the assignment with the most key and value hits, then the
/// fewest extra keys, then the earliest positions. Ground-truth calls left
/// over then take, in order, the best unused prediction of any name, but only
/// when that pairing shares a key or adds no extra keys.
pub fn align_calls(gt: &[ToolCall], pred: &[ToolCall]) -> CallAlignment {
    let mut chosen: Vec<Option<usize>> = vec![None; gt.len()];
    let mut used = vec![false; pred.len()];
    let mut names: Vec<&str> = gt.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    for name in names {
        let g: Vec<usize> = (0..gt.len()).filter(|&i| gt[i].name == name).collect();
        let p: Vec<usize> = (0..pred.len()).filter(|&j| pred[j].name == name).collect();
        for (gi, pj) in assign_same_name(gt, pred, &g, &p) {
            chosen[gi] = Some(pj);
            used[pj] = true;
        }
    }
    for (gi, g) in gt.iter().enumerate() {
        if chosen[gi].is_some() {
            continue;
        }
        let best = (0..pred.len())
            .filter(|&p| !used[p])
            .map(|p| (pair_score(g, &pred[p]), p))
            .filter(|((hits, extra), _)| *hits > 0.0 || *extra == 0)
            .fold(None::<((f64, usize), usize)>, |acc, (s, p)| match acc {
                Some((bs, _)) if !better(s, bs) => acc,
                _ => Some((s, p)),
            });
        if let Some((_, p)) = best {
            used[p] = true;
            chosen[gi] = Some(p);
        }
    }
    CallAlignment {
        pairs: chosen.into_iter().enumerate().collect(),
    }
}

/// More hits, or as many hits (up to rounding) and fewer extra keys.
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 - b.0 > 1e-12 || ((a.0 - b.0).abs() <= 1e-12 && a.1 < b.1)
}

/// Largest groups searched exhaustively; bigger ones fall back to in-order greedy.
const EXACT_GROUP_LIMIT: usize = 8;

/// Matches `min(|g|, |p|)` pairs within one tool name.
fn assign_same_name(gt: &[ToolCall], pred: &[ToolCall], g: &[usize], p: &[usize]) -> Vec<(usize, usize)> {
    if g.is_empty() || p.is_empty() {
        return Vec::new();
    }
    let scores: Vec<Vec<(f64, usize)>> = g.iter().map(|&i| p.iter().map(|&j| pair_score(&gt[i], &pred[j])).collect()).collect();
    let picks = if g.len().max(p.len()) <= EXACT_GROUP_LIMIT {
        let mut best = None;
        search(&scores, 0, g.len().min(p.len()), &mut vec![None; g.len()], &mut vec![false; p.len()], (0.0, 0), &mut best);
        best.map(|(_, a)| a).unwrap_or_default()
    } else {
        let mut taken = vec![false; p.len()];
        scores
            .iter()
            .map(|row| {
                let j = (0..p.len()).filter(|&j| !taken[j]).fold(None::<usize>, |acc, j| match acc {
                    Some(b) if !better(row[j], row[b]) => acc,
                    _ => Some(j),
                });
                if let Some(j) = j {
                    taken[j] = true;
                }
                j
            })
            .collect()
    };
    picks.iter().enumerate().filter_map(|(a, b)| b.map(|b| (g[a], p[b]))).collect()
}

type Assignment = Vec<Option<usize>>;

/// Depth-first over assignments of exactly `want` pairs. Candidates are
/// visited in index order and only strictly better totals replace the
/// incumbent, so ties keep the earliest positions.
fn search(
    scores: &[Vec<(f64, usize)>],
    row: usize,
    want: usize,
    current: &mut Assignment,
    taken: &mut [bool],
    acc: (f64, usize),
    best: &mut Option<((f64, usize), Assignment)>,
) {
    let placed = current.iter().filter(|c| c.is_some()).count();
    if placed + (scores.len() - row) < want {
        return;
    }
    if row == scores.len() {
        if best.as_ref().is_none_or(|(b, _)| better(acc, *b)) {
            *best = Some((acc, current.clone()));
        }
        return;
    }
    for j in 0..taken.len() {
        if taken[j] {
            continue;
        }
        taken[j] = true;
        current[row] = Some(j);
        let s = scores[row][j];
        search(scores, row + 1, want, current, taken, (acc.0 + s.0, acc.1 + s.1), best);
        current[row] = None;
        taken[j] = false;
    }
    search(scores, row + 1, want, current, taken, acc, best);
}

/// (key hits + value hits, extra predicted keys) for one pair.
fn pair_score(g: &ToolCall, p: &ToolCall) -> (f64, usize) {
    let hits: f64 = g
        .args
        .iter()
        .filter_map(|(k, gv)| p.args.get(k).map(|pv| 1.0 + element_score(gv, pv)))
        .sum();
    let extra = p.args.keys().filter(|k| !g.args.contains_key(*k)).count();
    (hits, extra)
}

/// 1 iff the multisets of tool names agree.
pub fn struct_reward(gt: &[ToolCall], pred: &[ToolCall]) -> f64 {
    if gt.len() != pred.len() {
        return 0.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for c in gt {
        *counts.entry(c.name.as_str()).or_default() += 1;
    }
    for c in pred {
        *counts.entry(c.name.as_str()).or_default() -= 1;
    }
    if counts.values().all(|&n| n == 0) {
        1.0
    } else {
        0.0
    }
}

struct KeyScores {
    universe: usize,
    key_hits: f64,
    value_hits: f64,
}

fn score_keys(gt: &[ToolCall], pred: &[ToolCall], alignment: &CallAlignment) -> KeyScores {
    let mut s = KeyScores {
        universe: 0,
        key_hits: 0.0,
        value_hits: 0.0,
    };
    for &(gi, pi) in &alignment.pairs {
        let Some(g) = gt.get(gi) else { continue };
        let p = pi.and_then(|i| pred.get(i));
        s.universe += g.args.len();
        for (k, gv) in &g.args {
            if let Some(pv) = p.and_then(|p| p.args.get(k)) {
                s.key_hits += 1.0;
                s.value_hits += element_score(gv, pv);
            }
        }
        if let Some(p) = p {
            s.universe += p.args.keys().filter(|k| !g.args.contains_key(*k)).count();
        }
    }
    s
}

/// Scalars score 0/1; lists score the fraction of matching positions over the
/// longer of the two lists.
fn element_score(gt: &Value, pred: &Value) -> f64 {
    match (gt, pred) {
        (Value::List(g), Value::List(p)) => {
            let n = g.len().max(p.len());
            if n == 0 {
                return 1.0;
            }
            let hits = g.iter().zip(p).filter(|(a, b)| a.canonical_eq(b)).count();
            hits as f64 / n as f64
        }
        _ => {
            if gt.canonical_eq(pred) {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn empty_universe(gt: &[ToolCall], pred: &[ToolCall]) -> f64 {
    if gt.len() == pred.len() {
        1.0
    } else {
        0.0
    }
}

pub fn key_reward(gt: &[ToolCall], pred: &[ToolCall], alignment: &CallAlignment) -> f64 {
    let s = score_keys(gt, pred, alignment);
    if s.universe == 0 {
        return empty_universe(gt, pred);
    }
    s.key_hits / s.universe as f64
}

pub fn value_reward(gt: &[ToolCall], pred: &[ToolCall], alignment: &CallAlignment) -> f64 {
    let s = score_keys(gt, pred, alignment);
    if s.universe == 0 {
        return empty_universe(gt, pred);
    }
    s.value_hits / s.universe as f64
}

/// Components for a given alignment, without the format term.
pub fn call_rewards(gt: &[ToolCall], pred: &[ToolCall], alignment: &CallAlignment) -> (f64, f64, f64) {
    (
        struct_reward(gt, pred),
        key_reward(gt, pred, alignment),
        value_reward(gt, pred, alignment),
    )
}

pub fn total_reward(t: &Trajectory, gt: &[ToolCall]) -> RewardBreakdown {
    total_reward_weighted(t, gt, &RewardWeights::default())
}

pub fn total_reward_weighted(t: &Trajectory, gt: &[ToolCall], w: &RewardWeights) -> RewardBreakdown {
    let alignment = align_calls(gt, &t.calls);
    let format = format_reward(t);
    let (structure, key, value) = call_rewards(gt, &t.calls, &alignment);
    RewardBreakdown {
        format,
        structure,
        key,
        value,
        total: w.format * format + w.structure * structure + w.key * key + w.value * value,
    }
}

/// Parse raw model output, then score it.
pub fn score_output(raw: &str, gt: &[ToolCall], cfg: &ParseConfig, w: &RewardWeights) -> Result<RewardBreakdown, ParseError> {
    let parsed = parse_output(raw, cfg)?;
    Ok(total_reward_weighted(&parsed.trajectory, gt, w))
}
