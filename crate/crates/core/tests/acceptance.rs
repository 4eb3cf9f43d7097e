//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use tooltrace::advantage::toy::{
    a_hat, random_instance, toy_policy_gradient, token_advantages, token_gradients, two_token_instance, InstanceSpec, PolicyMode, ToyGroup,
    ToyPolicy,
};
use tooltrace::advantage::{group_advantage, kl_low_var, psi, reshape_rows, AdvantageSource, DAConfig, EntropyEstimator, StdMode};
use tooltrace::lazy::{detect_lazy, LazyConfig};
use tooltrace::parser::{parse_output, Diagnostic, ParseConfig};
use tooltrace::pipeline::fixtures::{demo_batch, exchange_rate_registry, exchange_rate_seed, fixture_oracle, fixture_script};
use tooltrace::pipeline::{process_sample, synthesize, FailureKind, ScriptRule, ScriptedOracle, SeedSample, SynthesisConfig};
use tooltrace::reward::{score_output, value_reward, align_calls, RewardWeights};
use tooltrace::value::render_bracket_calls;
use tooltrace::{tool_call_equal, ToolCall, Trajectory, Value};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn render_output(reasoning: &str, calls: &[ToolCall]) -> String {
    Trajectory {
        reasoning: Some(reasoning.to_string()),
        answer: render_bracket_calls(calls),
        ..Trajectory::default()
    }
    .render()
}

/// (pairs where greedy equals the exhaustive optimum, pairs, seconds).
fn compare_with_oracle(seed: u64, n: usize, keep_args_on_rename: bool) -> Result<(usize, usize, f64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ParseConfig::default();
    let pairs: Vec<(Vec<ToolCall>, Vec<ToolCall>, String)> = (0..n)
        .map(|i| {
            let gt = common::random_gt(&mut rng);
            let pred = common::perturb(&mut rng, &gt, keep_args_on_rename);
            // every tenth output has a broken think block
            let raw = if i % 10 == 0 {
                format!("<think>reasoning</think>{}", render_bracket_calls(&pred))
            } else {
                render_output("Let me work through it.", &pred)
            };
            (gt, pred, raw)
        })
        .collect();
    let start = Instant::now();
    let mut equal = 0;
    for (k, (gt, pred, raw)) in pairs.iter().enumerate() {
        let greedy = score_output(raw, gt, &cfg, &RewardWeights::default()).map_err(|e| e.to_string())?.total;
        let oracle = common::exhaustive_total(gt, pred, k % 10 != 0);
        ensure(greedy <= oracle + 1e-9, || format!("pair {k}: greedy {greedy} exceeds exhaustive {oracle}"))?;
        if (greedy - oracle).abs() <= 1e-9 {
            equal += 1;
        } else if std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
            eprintln!("pair {k}: greedy {greedy} exhaustive {oracle}\n  gt   {}\n  pred {}", render_bracket_calls(gt), render_bracket_calls(pred));
        }
    }
    Ok((equal, n, start.elapsed().as_secs_f64()))
}

fn reward_oracle_equivalence() -> Outcome {
    let (equal, n, elapsed) = compare_with_oracle(11, 500, false)?;
    ensure(equal as f64 / n as f64 >= 0.99, || format!("only {equal}/{n} pairs agree"))?;
    ensure(elapsed < 5.0, || format!("took {elapsed:.2}s"))?;
    // renamed calls that keep another tool's arguments: reported, not gated
    let (adv_equal, adv_n, _) = compare_with_oracle(12, 500, true)?;
    Ok(format!("{equal}/{n} equal, {elapsed:.3}s; schema-violating renames {adv_equal}/{adv_n}"))
}

fn reward_hand_cases() -> Outcome {
    let ids = |v: &[&str]| Value::from(v.to_vec());
    let gt_one = [ToolCall::build("return_delivered_order_items", [("item_ids", ids(&["5753502325", "9851293632"]))])];
    let pred_one = [ToolCall::build("return_delivered_order_items", [("item_ids", ids(&["5753502325"]))])];
    let v = value_reward(&gt_one, &pred_one, &align_calls(&gt_one, &pred_one));
    ensure((v - 0.5).abs() <= 1e-9, || format!("item_ids value contribution {v}, expected 0.5"))?;

    let gt = vec![ToolCall::build(
        "return_delivered_order_items",
        [
            ("order_id", Value::from("#W7181492")),
            ("item_ids", ids(&["5753502325", "9851293632"])),
            ("payment_method_id", Value::from("paypal_3024827")),
        ],
    )];
    let mut pred = gt.clone();
    pred[0].args.insert("item_ids".into(), ids(&["5753502325"]));
    let full = value_reward(&gt, &pred, &align_calls(&gt, &pred));
    ensure((full - 2.5 / 3.0).abs() <= 1e-9, || format!("full-call value {full}, expected 2.5/3"))?;

    let turn = "<think>\nNow I should analyze the execution process of subtask 2:Use the 'set_budget_limit' tool to establish the converted USD amount as the budget limit using access token 'abc123xyz'.\n\nOkay, the user wants to set a budget limit using the converted USD amount from the previous exchange rate calculation. The exchange rate tool returned 7142.86 USD for 50,000 RMB.\n</think>\n\n[set_budget_limit(access_token=\"abc123xyz\", budget_limit=7142.86)]";
    let gt = [ToolCall::build("set_budget_limit", [("access_token", json!("abc123xyz")), ("budget_limit", json!(7142.86))])];
    let r = score_output(turn, &gt, &ParseConfig::default(), &RewardWeights::default()).map_err(|e| e.to_string())?;
    ensure(r.format == 1.0, || "format term lost".into())?;
    ensure((r.total - 4.0).abs() <= 1e-9, || format!("turn total {}", r.total))?;
    Ok(format!("item_ids 0.5, call value {full:.6}, turn total {}", r.total))
}

fn advantage_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let zeta = 1e-8;
    let mut checked = 0;
    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    while checked < 1000 {
        let g = rng.random_range(2..=16);
        let rewards: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..4.0)).collect();
        let m = rewards.iter().sum::<f64>() / g as f64;
        let sd = (rewards.iter().map(|r| (r - m).powi(2)).sum::<f64>() / g as f64).sqrt();
        if sd < zeta {
            continue;
        }
        let a = group_advantage(&rewards, StdMode::Population, zeta).map_err(|e| e.to_string())?;
        let am = a.iter().sum::<f64>() / g as f64;
        let asd = (a.iter().map(|x| (x - am).powi(2)).sum::<f64>() / g as f64).sqrt();
        worst_mean = worst_mean.max(am.abs());
        worst_std = worst_std.max((asd - 1.0).abs());
        checked += 1;
    }
    ensure(worst_mean <= 1e-9 && worst_std <= 1e-9, || format!("mean dev {worst_mean:e}, std dev {worst_std:e}"))?;
    Ok(format!("1000 groups, max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e}"))
}

fn entropy_advantage_contract() -> Outcome {
    let cfg = DAConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seen = 0;
    while seen < 10_000 {
        let g = rng.random_range(2..=8);
        let raw: Vec<f64> = (0..g).map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-2.0..2.0) }).collect();
        let rows: Vec<Vec<(f64, EntropyEstimator)>> = (0..g)
            .map(|_| (0..rng.random_range(1..20)).map(|_| (rng.random_range(0.0..12.0), EntropyEstimator::FullVocab)).collect())
            .collect();
        for rec in reshape_rows(&raw, &rows, &cfg).map_err(|e| e.to_string())?.iter().flatten() {
            if rec.source == AdvantageSource::Entropy {
                ensure((0.0..=cfg.delta).contains(&rec.a_hat), || format!("entropy advantage {} outside [0, δ]", rec.a_hat))?;
                seen += 1;
            }
        }
    }
    let at = psi(2.3, &cfg);
    // 0.1 * 2.3 rounds to 0.22999999999999998 in binary floating point
    ensure((at - 0.23).abs() <= 4.0 * f64::EPSILON, || format!("psi(2.3) = {at}"))?;
    for h in [5.0, 5.5, 10.0, 1e6] {
        ensure(psi(h, &cfg) == 0.5, || format!("psi({h}) = {}", psi(h, &cfg)))?;
    }
    Ok(format!("{seen} entropy-sourced values in [0, 0.5]; psi(2.3) = {at}"))
}

fn no_kl(cfg: &DAConfig) -> DAConfig {
    DAConfig { kl_coef: 0.0, ..*cfg }
}

fn row(theta: &[f64], vocab: usize, s: usize) -> &[f64] {
    &theta[s * vocab..(s + 1) * vocab]
}

/// Some sampled token sits in a row with positive entropy and has a non-zero ratio.
fn stagnation_precondition(policy: &ToyPolicy, group: &ToyGroup) -> bool {
    group.sequences.iter().flat_map(|s| &s.steps).any(|&(s, y)| {
        let p = common::softmax_row(row(&policy.logits, policy.vocab, s))[y];
        common::row_entropy(row(&policy.logits, policy.vocab, s)) > 1e-12 && p > 0.0
    })
}

fn non_stagnation() -> Outcome {
    let cfg = no_kl(&DAConfig::default());
    let spec = InstanceSpec {
        degenerate_rewards: true,
        ..InstanceSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let start = Instant::now();
    let mut applicable = 0;
    let mut min_da = f64::INFINITY;
    for k in 0..100 {
        let (policy, group) = random_instance(&mut rng, &spec);
        let grpo = toy_policy_gradient(&policy, &group, &cfg, PolicyMode::Grpo, EntropyEstimator::FullVocab).map_err(|e| e.to_string())?;
        let gn = common::l2(&grpo.grad);
        ensure(gn == 0.0, || format!("instance {k}: GRPO norm {gn:e}"))?;
        let da = toy_policy_gradient(&policy, &group, &cfg, PolicyMode::DaGrpo, EntropyEstimator::FullVocab).map_err(|e| e.to_string())?;
        let dn = common::l2(&da.grad);
        if stagnation_precondition(&policy, &group) {
            applicable += 1;
            min_da = min_da.min(dn);
            ensure(dn > 1e-6, || format!("instance {k}: DA-GRPO norm {dn:e}"))?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(applicable > 0, || "no instance met the precondition".into())?;
    ensure(elapsed < 10.0, || format!("took {elapsed:.2}s"))?;
    Ok(format!("100/100; {applicable} with live rows, min DA-GRPO norm {min_da:.3e}; {elapsed:.3}s"))
}

fn high_entropy_direction() -> Outcome {
    let cfg = no_kl(&DAConfig::default());
    let (policy, group) = two_token_instance(0.1, 0.8, 8);
    let records = token_advantages(&policy, &group, &cfg, PolicyMode::DaGrpo, EntropyEstimator::Surprisal).map_err(|e| e.to_string())?;
    let toks = token_gradients(&policy, &group, &records, &cfg);
    let (hi, lo) = (toks[0], toks[1]);
    ensure((hi.ratio - 1.0).abs() < 1e-12 && (lo.ratio - 1.0).abs() < 1e-12, || "ratios differ from 1".into())?;
    let measured = hi.logprob_coef / lo.logprob_coef;
    let expected = 2.3 / 0.22;
    // hand-derived: equal weights and ratios leave α·(-ln p) in each coefficient
    let hand = (-(0.1f64).ln()) / (-(0.8f64).ln());
    ensure((measured / hand - 1.0).abs() < 1e-9, || format!("measured {measured} vs hand {hand}"))?;
    ensure((measured / expected - 1.0).abs() <= 0.05, || format!("factor {measured:.4} vs {expected:.4}"))?;
    let logit_ratio = hi.chosen_logit_grad / lo.chosen_logit_grad;
    Ok(format!("factor {measured:.4} vs {expected:.4} ({:+.2}%); chosen-logit ratio {logit_ratio:.2}", (measured / expected - 1.0) * 100.0))
}

fn min_clip_distance(policy: &ToyPolicy, group: &ToyGroup, eps: f64) -> f64 {
    let v = policy.vocab;
    group
        .sequences
        .iter()
        .flat_map(|s| &s.steps)
        .map(|&(s, y)| {
            let p = common::softmax_row(row(&policy.logits, v, s))[y];
            let q = common::softmax_row(row(&policy.old_logits, v, s))[y];
            let r = p / q;
            (r - 1.0 - eps).abs().min((r - 1.0 + eps).abs())
        })
        .fold(f64::INFINITY, f64::min)
}

fn gradient_correctness() -> Outcome {
    let cfg = DAConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 50 {
        let spec = InstanceSpec {
            degenerate_rewards: done % 2 == 0,
            ..InstanceSpec::default()
        };
        let (policy, group) = random_instance(&mut rng, &spec);
        if min_clip_distance(&policy, &group, cfg.epsilon_clip) < 1e-3 {
            continue;
        }
        for mode in [PolicyMode::Grpo, PolicyMode::DaGrpo] {
            let g = toy_policy_gradient(&policy, &group, &cfg, mode, EntropyEstimator::FullVocab).map_err(|e| e.to_string())?;
            let fd = common::central_difference(&policy, &group, &a_hat(&g.advantages), cfg.epsilon_clip, cfg.kl_coef, 1e-5);
            let diff: Vec<f64> = g.grad.iter().zip(&fd).map(|(a, b)| a - b).collect();
            let rel = common::l2(&diff) / common::l2(&fd).max(common::l2(&g.grad)).max(1e-6);
            worst = worst.max(rel);
            ensure(rel <= 1e-4, || format!("instance {done} {mode:?}: relative error {rel:e}"))?;
        }
        done += 1;
    }
    Ok(format!("50 instances x 2 modes, max relative error {worst:.2e}"))
}

/// Gradient of the clipped surrogate restricted to entropy-sourced tokens, no KL.
fn masked_entropy_gradient(policy: &ToyPolicy, group: &ToyGroup, cfg: &DAConfig) -> Vec<f64> {
    let v = policy.vocab;
    let records = token_advantages(policy, group, cfg, PolicyMode::DaGrpo, EntropyEstimator::FullVocab).unwrap();
    let g = group.sequences.len() as f64;
    let mut grad = vec![0.0; policy.logits.len()];
    for (i, seq) in group.sequences.iter().enumerate() {
        let w = 1.0 / (g * seq.steps.len() as f64);
        for (t, &(s, y)) in seq.steps.iter().enumerate() {
            let rec = records[i][t];
            if rec.source != AdvantageSource::Entropy {
                continue;
            }
            let p = common::softmax_row(row(&policy.logits, v, s));
            let q = common::softmax_row(row(&policy.old_logits, v, s));
            let r = p[y] / q[y];
            let a = rec.a_hat;
            let active = (a > 0.0 && r <= 1.0 + cfg.epsilon_clip) || (a < 0.0 && r >= 1.0 - cfg.epsilon_clip);
            if !active {
                continue;
            }
            for (k, pk) in p.iter().enumerate() {
                let ind = if k == y { 1.0 } else { 0.0 };
                grad[s * v + k] += w * a * r * (ind - pk);
            }
        }
    }
    grad
}

fn decomposition_identity() -> Outcome {
    let cfg = DAConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut entropy_tokens = 0;
    for k in 0..60 {
        let (policy, mut group) = random_instance(
            &mut rng,
            &InstanceSpec {
                degenerate_rewards: k % 3 == 0,
                min_group: 3,
                ..InstanceSpec::default()
            },
        );
        if k % 3 == 1 {
            // middle rollout sits exactly on the mean
            let (a, b) = (rng.random_range(0..=4) as f64, rng.random_range(5..=8) as f64);
            group.rewards = vec![a, b, (a + b) / 2.0];
            group.sequences.truncate(3);
        }
        let grpo = toy_policy_gradient(&policy, &group, &cfg, PolicyMode::Grpo, EntropyEstimator::FullVocab).map_err(|e| e.to_string())?;
        let da = toy_policy_gradient(&policy, &group, &cfg, PolicyMode::DaGrpo, EntropyEstimator::FullVocab).map_err(|e| e.to_string())?;
        entropy_tokens += da.advantages.iter().flatten().filter(|r| r.source == AdvantageSource::Entropy).count();
        let masked = masked_entropy_gradient(&policy, &group, &cfg);
        let err = da
            .grad
            .iter()
            .zip(&grpo.grad)
            .zip(&masked)
            .map(|((d, g), m)| (d - g - m).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        ensure(err <= 1e-8, || format!("instance {k}: max abs difference {err:e}"))?;
    }
    ensure(entropy_tokens > 0, || "no entropy-sourced tokens exercised".into())?;
    Ok(format!("60 groups, {entropy_tokens} entropy tokens, max abs difference {worst:.1e}"))
}

fn kl_estimator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_dev = 0.0f64;
    for k in 0..10_000 {
        let lt = -rng.random_range(0.0..15.0);
        let lr = -rng.random_range(0.0..15.0);
        let kl = kl_low_var(lt, lr);
        ensure(kl >= 0.0, || format!("pair {k}: kl {kl}"))?;
        let d: f64 = lr - lt;
        let direct = d.exp() - d - 1.0;
        worst_dev = worst_dev.max((kl - direct).abs() / direct.abs().max(1.0));
    }
    ensure(worst_dev <= 1e-9, || format!("deviation from exp(d) - d - 1: {worst_dev:e}"))?;
    let ln2 = std::f64::consts::LN_2;
    let plus = kl_low_var(-1.0, -1.0 + ln2);
    let minus = kl_low_var(-1.0, -1.0 - ln2);
    ensure((plus - 0.3069).abs() <= 1e-4, || format!("+ln2 gives {plus}"))?;
    ensure((minus - 0.1931).abs() <= 1e-4, || format!("-ln2 gives {minus}"))?;
    Ok(format!("10000 pairs >= 0; +ln2 {plus:.4}, -ln2 {minus:.4}"))
}

fn reasoning(tokens: usize, reflections: usize) -> Trajectory {
    let mut words = vec!["Wait"; reflections];
    words.resize(tokens, "step");
    let text = words.join(" ");
    parse_output(&format!("<think>\n{text}\n</think>\n\nok"), &ParseConfig::default()).unwrap().trajectory
}

fn lazy_detection() -> Outcome {
    let cfg = LazyConfig::default();
    let cases = [((301, 3), false), ((301, 4), true), ((300, 4), false), ((300, 3), false), ((400, 0), false)];
    for ((n, r), want) in cases {
        let got = detect_lazy(&reasoning(n, r), &cfg).is_lazy;
        ensure(got == want, || format!("{n} tokens / {r} reflections: lazy = {got}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let fillers = ["so", "the", "tool", "Wait,", "But", "however", "call", "check", "value", "Hmm"];
    let mut flips = 0;
    for k in 0..1000 {
        let base_len = rng.random_range(50..400);
        let mut words: Vec<&str> = (0..base_len).map(|_| fillers[rng.random_range(0..fillers.len())]).collect();
        let parse = |w: &[&str]| parse_output(&format!("<think>\n{}\n</think>\n\nok", w.join(" ")), &ParseConfig::default()).unwrap().trajectory;
        let before = detect_lazy(&parse(&words), &cfg);
        for _ in 0..rng.random_range(1..80) {
            let at = rng.random_range(0..=words.len());
            words.insert(at, fillers[rng.random_range(0..fillers.len())]);
        }
        let after = detect_lazy(&parse(&words), &cfg);
        ensure(after.token_count >= before.token_count && after.reflection_count >= before.reflection_count, || {
            format!("augmentation {k} decreased counts")
        })?;
        ensure(!before.is_lazy || after.is_lazy, || format!("augmentation {k} turned a lazy trace non-lazy"))?;
        if !before.is_lazy && after.is_lazy {
            flips += 1;
        }
    }
    Ok(format!("boundaries hold; 1000 augmentations monotone ({flips} became lazy)"))
}

fn pipeline_end_to_end() -> Outcome {
    let run = || {
        let composed = process_sample(&exchange_rate_seed(), &fixture_oracle(7), &exchange_rate_registry(), &SynthesisConfig::default())
            .map_err(|e| e.to_string())?;
        Ok::<_, String>((composed.verified, composed.turns.clone(), composed.text.clone()))
    };
    let (verified, turns, text) = run()?;
    ensure(verified, || "trajectory not verified".into())?;
    let last = turns.last().ok_or("no turns")?;
    let calls = parse_output(&last.content, &ParseConfig::default()).map_err(|e| e.to_string())?.trajectory.calls;
    let want = ToolCall::build("set_budget_limit", [("access_token", json!("abc123xyz")), ("budget_limit", json!(7142.86))]);
    ensure(calls.len() == 1 && tool_call_equal(&calls[0], &want), || format!("step-2 calls {calls:?}"))?;
    let again = run()?;
    ensure(again.2 == text && again.1 == turns, || "second run differs".into())?;
    Ok(format!("verified, budget_limit = 7142.86, {} bytes identical across runs", text.len()))
}

fn over_decomposition_guard() -> Outcome {
    let mut batch = demo_batch();
    let reference = vec![
        ToolCall::build("get_weather", [("city", "Rome")]),
        ToolCall::build("get_flight_cost", [("origin", "JFK"), ("destination", "FCO")]),
        ToolCall::build("set_budget_limit", [("access_token", json!("rm-1")), ("budget_limit", json!(420.0))]),
    ];
    let mut over: SeedSample = batch[0].clone();
    over.id = "rome-trip".into();
    over.context.query = "Check the Rome weather, price a JFK to FCO flight and budget for it with token rm-1.".into();
    over.reference = reference;
    over.answer_text = None;
    batch.push(over);
    let mut script = fixture_script();
    let six: Vec<_> = (1..=6).map(|i| json!({"step": i, "description": format!("part {i} of the Rome trip")})).collect();
    script.rules.insert(
        0,
        ScriptRule {
            when: vec!["You are a task decomposition expert.".into(), "Rome weather".into()],
            response: json!(six).to_string(),
        },
    );
    let (rows, report) = synthesize(&batch, &ScriptedOracle::new(script, 1), &exchange_rate_registry(), &SynthesisConfig::default());
    // hand count: the ten demo samples verify, the Rome sample is over-decomposed
    let (hand_total, hand_verified) = (11, 10);
    ensure(report.total == hand_total && report.verified == hand_verified, || format!("{}/{}", report.verified, report.total))?;
    ensure(report.success_rate == hand_verified as f64 / hand_total as f64, || format!("rate {}", report.success_rate))?;
    ensure(report.failures[&FailureKind::CountMismatch] == 1, || format!("failures {:?}", report.failures))?;
    ensure(report.failed.len() == 1 && report.failed[0].id == "rome-trip", || format!("failed {:?}", report.failed))?;
    ensure(rows.iter().all(|r| r.id != "rome-trip"), || "rejected sample emitted".into())?;
    Ok(format!("rejected as count_mismatch; success rate {}/{} = {:.4}", report.verified, report.total, report.success_rate))
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &["Okay,", "let me", "check", "the tool", "Wait,", "so", "\n\n", "\n", "value=3", "[note]", "(x)", "\"quoted\"", "émoji ✓", "  "];
    let n = rng.random_range(1..30);
    let mut s: String = (0..n).map(|_| PIECES[rng.random_range(0..PIECES.len())]).collect::<Vec<_>>().join(" ");
    if s.trim().is_empty() {
        s.push_str("fine");
    }
    s
}

fn nested_value(rng: &mut ChaCha8Rng, depth: usize) -> Value {
    match rng.random_range(0..8) {
        0 if depth < 2 => Value::List((0..rng.random_range(0..4)).map(|_| nested_value(rng, depth + 1)).collect()),
        1 if depth < 2 => {
            let mut m = IndexMap::new();
            for i in 0..rng.random_range(0..3) {
                m.insert(format!("k{i}"), nested_value(rng, depth + 1));
            }
            Value::Map(m)
        }
        2 => Value::Null,
        3 => Value::String(["a \"q\" b", "back\\slash", "line\nbreak", "tab\there", "ünïcödé", ""][rng.random_range(0..6)].into()),
        4 => Value::Number(rng.random_range(-1e6..1e6)),
        _ => common::scalar(rng),
    }
}

fn parser_round_trip() -> Outcome {
    let cfg = ParseConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in 0..1000 {
        let n = rng.random_range(1..=4);
        let calls: Vec<ToolCall> = (0..n)
            .map(|_| {
                let mut c = common::random_call(&mut rng);
                if rng.random_bool(0.3) {
                    c.args.insert("payload".into(), nested_value(&mut rng, 0));
                }
                c
            })
            .collect();
        let raw = render_output(&random_text(&mut rng), &calls);
        let first = parse_output(&raw, &cfg).map_err(|e| e.to_string())?;
        ensure(first.diagnostics.is_empty(), || format!("output {k}: diagnostics {:?}", first.diagnostics))?;
        ensure(first.trajectory.calls == calls, || format!("output {k}: calls changed on first parse"))?;
        let second = parse_output(&first.trajectory.render(), &cfg).map_err(|e| e.to_string())?;
        let (a, b) = (&first.trajectory, &second.trajectory);
        ensure(a.reasoning == b.reasoning && a.answer == b.answer && a.calls == b.calls && a.thoughts == b.thoughts, || {
            format!("output {k}: round trip differs")
        })?;
    }
    let fixtures: &[(&str, &[&str])] = &[
        ("[f(a=1), g(b=), h(c=\"x\")]", &["f", "h"]),
        ("[f(a=1), g(b=\"unterminated), h(c=2)]", &["f"]),
        ("[lookup(id=7), 9bad(x=1), fetch(url=\"u\")]", &["lookup", "fetch"]),
        ("[f(a=1, a=2), g(b=[1, 2])]", &["g"]),
        ("[f(a=bare_name), g(b=True)]", &["g"]),
    ];
    let mut kept = 0;
    for (answer, names) in fixtures {
        let out = parse_output(&format!("<think>\nx\n</think>\n\n{answer}"), &cfg).map_err(|e| e.to_string())?;
        let got: Vec<&str> = out.trajectory.calls.iter().map(|c| c.name.as_str()).collect();
        let malformed = out.diagnostics.iter().filter(|d| matches!(d, Diagnostic::MalformedCall { .. })).count();
        ensure(malformed > 0, || format!("{answer}: no diagnostic"))?;
        ensure(got.len() >= names.len() && names.iter().all(|n| got.contains(n)), || format!("{answer}: kept {got:?}"))?;
        kept += got.len();
    }
    Ok(format!("1000 outputs round-trip; {} malformed fixtures diagnosed, {kept} siblings kept", fixtures.len()))
}

fn main() -> ExitCode {
    let criteria: &[(&str, fn() -> Outcome)] = &[
        ("reward oracle equivalence", reward_oracle_equivalence),
        ("reward hand cases", reward_hand_cases),
        ("advantage normalization", advantage_normalization),
        ("entropy advantage contract", entropy_advantage_contract),
        ("non-stagnation", non_stagnation),
        ("high-entropy direction", high_entropy_direction),
        ("gradient correctness", gradient_correctness),
        ("decomposition identity", decomposition_identity),
        ("kl estimator", kl_estimator),
        ("lazy detection", lazy_detection),
        ("pipeline end-to-end", pipeline_end_to_end),
        ("over-decomposition guard", over_decomposition_guard),
        ("parser round-trip", parser_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
