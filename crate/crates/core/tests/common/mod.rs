//! Generators and from-scratch reference implementations shared by the
//! acceptance suite. Nothing here calls the scoring or gradient code under
//! test.

#![allow(dead_code)]

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use tooltrace::advantage::toy::{ToyGroup, ToyPolicy};
use tooltrace::{ToolCall, Value};

// ---------- call generation ----------

const TOOLS: &[(&str, &[&str])] = &[
    ("get_weather", &["city", "unit"]),
    ("return_delivered_order_items", &["order_id", "item_ids", "payment_method_id"]),
    ("compute_exchange_rate", &["base_currency", "target_currency", "value"]),
    ("set_budget_limit", &["access_token", "budget_limit"]),
    ("search_flights", &["origin", "destination", "date", "nonstop"]),
    ("send_email", &["to", "subject"]),
];

const WORDS: &[&str] = &["Paris", "Tokyo", "RMB", "USD", "abc123xyz", "W7181492", "celsius", "2024-05-01", "hello world", "SFO"];

pub fn scalar<R: Rng>(rng: &mut R) -> Value {
    match rng.random_range(0..5) {
        0 => Value::Number(rng.random_range(-1000..1000) as f64),
        1 => Value::Number((rng.random_range(-100000..100000) as f64) / 100.0),
        2 => Value::Bool(rng.random()),
        _ => Value::String(WORDS[rng.random_range(0..WORDS.len())].to_string()),
    }
}

pub fn arg_value<R: Rng>(rng: &mut R) -> Value {
    if rng.random_bool(0.2) {
        let n = rng.random_range(1..4);
        Value::List((0..n).map(|_| Value::String(format!("{}", rng.random_range(1_000_000_000u64..9_999_999_999)))).collect())
    } else {
        scalar(rng)
    }
}

pub fn random_call<R: Rng>(rng: &mut R) -> ToolCall {
    let (name, keys) = TOOLS[rng.random_range(0..TOOLS.len())];
    let mut args = IndexMap::new();
    for k in keys.iter() {
        if rng.random_bool(0.85) {
            args.insert(k.to_string(), arg_value(rng));
        }
    }
    ToolCall::new(name, args).unwrap()
}

/// Ground truth with 0..=4 calls; repeated tool names are common.
pub fn random_gt<R: Rng>(rng: &mut R) -> Vec<ToolCall> {
    let n = [0, 1, 1, 2, 2, 2, 3, 3, 4][rng.random_range(0..9)];
    let mut calls: Vec<ToolCall> = (0..n).map(|_| random_call(rng)).collect();
    if n >= 2 && rng.random_bool(0.3) {
        // same tool, different arguments
        let mut twin = calls[0].clone();
        for v in twin.args.values_mut() {
            if rng.random_bool(0.5) {
                *v = arg_value(rng);
            }
        }
        calls[1] = twin;
    }
    calls
}

/// A plausible model prediction derived from the ground truth. A wrong tool
/// is called with its own parameters unless `keep_args_on_rename` is set, in
/// which case the renamed call keeps the original tool's arguments.
pub fn perturb<R: Rng>(rng: &mut R, gt: &[ToolCall], keep_args_on_rename: bool) -> Vec<ToolCall> {
    let mut pred: Vec<ToolCall> = gt.to_vec();
    if rng.random_bool(0.35) {
        return pred;
    }
    for call in pred.iter_mut() {
        let keys: Vec<String> = call.args.keys().cloned().collect();
        match rng.random_range(0..7) {
            0 if !keys.is_empty() => {
                let k = &keys[rng.random_range(0..keys.len())];
                call.args.insert(k.clone(), arg_value(rng));
            }
            1 if !keys.is_empty() => {
                let k = &keys[rng.random_range(0..keys.len())];
                call.args.shift_remove(k);
            }
            2 => {
                call.args.insert("extra_flag".into(), Value::Bool(true));
            }
            3 => {
                for v in call.args.values_mut() {
                    if let Value::List(items) = v {
                        if items.len() > 1 {
                            items.pop();
                        }
                    }
                }
            }
            4 if keep_args_on_rename => {
                call.name = TOOLS[rng.random_range(0..TOOLS.len())].0.to_string();
            }
            4 => *call = random_call(rng),
            _ => {}
        }
    }
    match rng.random_range(0..6) {
        0 => pred.shuffle(rng),
        1 if !pred.is_empty() => {
            let i = rng.random_range(0..pred.len());
            pred.remove(i);
        }
        2 if pred.len() < 4 => {
            let i = rng.random_range(0..=pred.len());
            pred.insert(i, random_call(rng));
        }
        3 if pred.len() >= 2 => pred.swap(0, 1),
        _ => {}
    }
    pred.truncate(4);
    pred
}

// ---------- exhaustive reward oracle ----------

fn same_value(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0),
        (Value::String(x), Value::String(y)) => x.trim() == y.trim(),
        (Value::List(x), Value::List(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same_value(p, q)),
        (Value::Map(x), Value::Map(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| same_value(v, w)))
        }
        _ => a == b,
    }
}

fn value_hit(g: &Value, p: &Value) -> f64 {
    match (g, p) {
        (Value::List(a), Value::List(b)) => {
            let n = a.len().max(b.len());
            if n == 0 {
                1.0
            } else {
                a.iter().zip(b).filter(|(x, y)| same_value(x, y)).count() as f64 / n as f64
            }
        }
        _ => {
            if same_value(g, p) {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn names_match(gt: &[ToolCall], pred: &[ToolCall]) -> bool {
    let mut a: Vec<&str> = gt.iter().map(|c| c.name.as_str()).collect();
    let mut b: Vec<&str> = pred.iter().map(|c| c.name.as_str()).collect();
    a.sort();
    b.sort();
    a == b
}

/// key + value for one explicit assignment.
fn score_assignment(gt: &[ToolCall], pred: &[ToolCall], assign: &[Option<usize>]) -> f64 {
    let mut universe = 0usize;
    let (mut keys, mut values) = (0.0, 0.0);
    for (g, a) in gt.iter().zip(assign) {
        universe += g.args.len();
        if let Some(p) = a.map(|i| &pred[i]) {
            universe += p.args.keys().filter(|k| !g.args.contains_key(*k)).count();
            for (k, gv) in &g.args {
                if let Some(pv) = p.args.get(k) {
                    keys += 1.0;
                    values += value_hit(gv, pv);
                }
            }
        }
    }
    if universe == 0 {
        return if gt.len() == pred.len() { 2.0 } else { 0.0 };
    }
    (keys + values) / universe as f64
}

fn best_assignment(gt: &[ToolCall], pred: &[ToolCall], i: usize, assign: &mut Vec<Option<usize>>, used: &mut Vec<bool>) -> f64 {
    if i == gt.len() {
        return score_assignment(gt, pred, assign);
    }
    assign.push(None);
    let mut best = best_assignment(gt, pred, i + 1, assign, used);
    assign.pop();
    for p in 0..pred.len() {
        if used[p] {
            continue;
        }
        used[p] = true;
        assign.push(Some(p));
        best = best.max(best_assignment(gt, pred, i + 1, assign, used));
        assign.pop();
        used[p] = false;
    }
    best
}

/// Highest total over every partial one-to-one assignment.
pub fn exhaustive_total(gt: &[ToolCall], pred: &[ToolCall], format_ok: bool) -> f64 {
    let format = if format_ok { 1.0 } else { 0.0 };
    let structure = if names_match(gt, pred) { 1.0 } else { 0.0 };
    let kv = best_assignment(gt, pred, 0, &mut Vec::new(), &mut vec![false; pred.len()]);
    format + structure + kv
}

// ---------- toy objective oracle ----------

fn log_softmax_at(row: &[f64], y: usize) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
    row[y] - m - z.ln()
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

pub fn row_entropy(row: &[f64]) -> f64 {
    softmax_row(row).iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum()
}

/// Clipped surrogate with low-variance KL, written out directly.
pub fn objective(policy: &ToyPolicy, theta: &[f64], group: &ToyGroup, adv: &[Vec<f64>], eps: f64, kl: f64) -> f64 {
    let v = policy.vocab;
    let g = group.sequences.len() as f64;
    let mut total = 0.0;
    for (i, seq) in group.sequences.iter().enumerate() {
        let len = seq.steps.len() as f64;
        for (t, &(s, y)) in seq.steps.iter().enumerate() {
            let row = |m: &[f64]| m[s * v..(s + 1) * v].to_vec();
            let lt = log_softmax_at(&row(theta), y);
            let lo = log_softmax_at(&row(&policy.old_logits), y);
            let lr = log_softmax_at(&row(&policy.reference_logits), y);
            let r = (lt - lo).exp();
            let a = adv[i][t];
            let surr = (r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a);
            let d = lr - lt;
            let k3 = d.exp() - d - 1.0;
            total += (surr - kl * k3) / (g * len);
        }
    }
    total
}

pub fn central_difference(policy: &ToyPolicy, group: &ToyGroup, adv: &[Vec<f64>], eps: f64, kl: f64, h: f64) -> Vec<f64> {
    let mut theta = policy.logits.clone();
    (0..theta.len())
        .map(|k| {
            let x = theta[k];
            theta[k] = x + h;
            let up = objective(policy, &theta, group, adv, eps, kl);
            theta[k] = x - h;
            let down = objective(policy, &theta, group, adv, eps, kl);
            theta[k] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
