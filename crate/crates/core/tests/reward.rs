mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tooltrace::parser::ParseConfig;
use tooltrace::reward::{align_calls, score_output, RewardWeights};
use tooltrace::value::render_bracket_calls;
use tooltrace::ToolCall;

fn call(name: &str, args: serde_json::Value) -> ToolCall {
    serde_json::from_value(serde_json::json!({"name": name, "args": args})).unwrap()
}

fn formatted(calls: &[ToolCall]) -> String {
    format!("<think>\nplan the calls\n</think>\n\n{}", render_bracket_calls(calls))
}

fn total(raw: &str, gt: &[ToolCall]) -> tooltrace::reward::RewardBreakdown {
    score_output(raw, gt, &ParseConfig::default(), &RewardWeights::default()).unwrap()
}

proptest! {
    #[test]
    fn exact_copy_scores_four(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = common::random_gt(&mut rng);
        let r = total(&formatted(&gt), &gt);
        prop_assert_eq!(r.total, 4.0, "{:?}", gt);
    }

    #[test]
    fn components_stay_in_range_and_never_beat_the_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = common::random_gt(&mut rng);
        let pred = common::perturb(&mut rng, &gt, seed % 2 == 0);
        let r = total(&formatted(&pred), &gt);
        for c in [r.format, r.structure, r.key, r.value] {
            prop_assert!((0.0..=1.0).contains(&c));
        }
        prop_assert!((r.total - (r.format + r.structure + r.key + r.value)).abs() < 1e-12);
        let best = common::exhaustive_total(&gt, &pred, true);
        prop_assert!(r.total <= best + 1e-9, "{} > {}", r.total, best);
    }

    #[test]
    fn alignment_is_one_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = common::random_gt(&mut rng);
        let pred = common::perturb(&mut rng, &gt, true);
        let al = align_calls(&gt, &pred);
        prop_assert_eq!(al.pairs.len(), gt.len());
        let mut used: Vec<usize> = al.pairs.iter().filter_map(|p| p.1).collect();
        let n = used.len();
        used.sort_unstable();
        used.dedup();
        prop_assert_eq!(used.len(), n);
        prop_assert!(used.iter().all(|&j| j < pred.len()));
    }
}

#[test]
fn call_order_does_not_matter() {
    let gt = vec![
        call("get_weather", serde_json::json!({"city": "Rome"})),
        call("book_hotel", serde_json::json!({"city": "Rome", "nights": 3})),
    ];
    let swapped = vec![gt[1].clone(), gt[0].clone()];
    assert_eq!(total(&formatted(&swapped), &gt).total, 4.0);
}

#[test]
fn missing_think_block_only_costs_format() {
    let gt = vec![call("f", serde_json::json!({"x": 1}))];
    let r = total("[f(x=1)]", &gt);
    assert_eq!((r.format, r.structure, r.key, r.value), (0.0, 1.0, 1.0, 1.0));
}

#[test]
fn extra_keys_dilute_key_and_value() {
    let gt = vec![call("f", serde_json::json!({"x": 1}))];
    let r = total(&formatted(&[call("f", serde_json::json!({"x": 1, "y": 2}))]), &gt);
    assert_eq!((r.key, r.value), (0.5, 0.5));
}

#[test]
fn list_values_earn_partial_credit() {
    let gt = vec![call("f", serde_json::json!({"ids": [1, 2, 3, 4]}))];
    let pred = vec![call("f", serde_json::json!({"ids": [1, 2, 9]}))];
    let r = total(&formatted(&pred), &gt);
    assert_eq!((r.key, r.value), (1.0, 0.5));
}
