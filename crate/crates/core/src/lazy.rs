//! Lazy-reasoning detection and behavior statistics.
//!
//! A reasoning block is lazy when it is both long and reflection-heavy:
//! strictly more than `min_tokens` tokens and strictly more than
//! `min_reflections` reflection-keyword matches.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lexicon::{BehaviorLexicon, PatternSet};
use crate::types::{BehaviorCategory, Trajectory};

#[derive(Debug, Clone)]
pub struct LazyConfig {
    pub min_tokens: usize,
    pub min_reflections: usize,
    pub lexicon: BehaviorLexicon,
}

impl Default for LazyConfig {
    fn default() -> Self {
        Self {
            min_tokens: 300,
            min_reflections: 3,
            lexicon: BehaviorLexicon::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LazyReport {
    pub token_count: usize,
    pub reflection_count: usize,
    pub is_lazy: bool,
    pub behavior_histogram: BTreeMap<BehaviorCategory, usize>,
}

pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn count_reflections(reasoning: &str, patterns: &PatternSet) -> usize {
    patterns.count(reasoning)
}

pub fn detect_lazy(t: &Trajectory, cfg: &LazyConfig) -> LazyReport {
    detect_lazy_with(t, cfg, whitespace_tokens)
}

/// Same as [`detect_lazy`] with a caller-supplied token counter.
pub fn detect_lazy_with<F: Fn(&str) -> usize>(t: &Trajectory, cfg: &LazyConfig, tokenizer: F) -> LazyReport {
    let mut histogram: BTreeMap<BehaviorCategory, usize> = BehaviorCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for th in &t.thoughts {
        *histogram.entry(th.category).or_default() += 1;
    }
    let Some(reasoning) = t.reasoning.as_deref() else {
        return LazyReport {
            token_count: 0,
            reflection_count: 0,
            is_lazy: false,
            behavior_histogram: histogram,
        };
    };
    let token_count = tokenizer(reasoning);
    let reflection_count = cfg.lexicon.reflection().map_or(0, |p| count_reflections(reasoning, p));
    LazyReport {
        token_count,
        reflection_count,
        is_lazy: token_count > cfg.min_tokens && reflection_count > cfg.min_reflections,
        behavior_histogram: histogram,
    }
}

/// Fraction of thoughts per category across a corpus. Categories that never
/// occur are omitted; an empty corpus gives an empty map.
pub fn behavior_distribution<'a, I>(trajectories: I) -> BTreeMap<BehaviorCategory, f64>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let mut counts: BTreeMap<BehaviorCategory, usize> = BTreeMap::new();
    for t in trajectories {
        for th in &t.thoughts {
            *counts.entry(th.category).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    counts.into_iter().map(|(c, n)| (c, n as f64 / total as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_output, ParseConfig};
    use crate::types::Thought;
    use proptest::prelude::*;

    fn traj(reasoning: &str) -> Trajectory {
        Trajectory {
            reasoning: Some(reasoning.to_string()),
            ..Trajectory::default()
        }
    }

    fn body(tokens: usize, reflections: usize) -> String {
        let mut words: Vec<&str> = vec!["Wait"; reflections];
        words.resize(tokens, "token");
        words.join(" ")
    }

    #[test]
    fn boundaries_are_strict() {
        let cfg = LazyConfig::default();
        assert!(!detect_lazy(&traj(&body(301, 3)), &cfg).is_lazy);
        assert!(detect_lazy(&traj(&body(301, 4)), &cfg).is_lazy);
        assert!(!detect_lazy(&traj(&body(300, 10)), &cfg).is_lazy);
        assert!(!detect_lazy(&Trajectory::default(), &cfg).is_lazy);
    }

    #[test]
    fn decomposed_reasoning_is_not_lazy() {
        let text = format!("First, break it down. {}", body(367, 0));
        let r = detect_lazy(&traj(&text), &LazyConfig::default());
        assert_eq!(r.reflection_count, 0);
        assert!(!r.is_lazy);
    }

    #[test]
    fn custom_tokenizer() {
        let cfg = LazyConfig::default();
        let r = detect_lazy_with(&traj("Wait but however hmm maybe"), &cfg, |_| 1616);
        assert_eq!(r.token_count, 1616);
        assert!(r.is_lazy);
    }

    #[test]
    fn histogram_counts_thoughts() {
        let raw = "<think>\nFirst, break it down.\n\nWait, maybe not.\n\nThe answer is 4.\n</think>\n\ndone";
        let t = parse_output(raw, &ParseConfig::default()).unwrap().trajectory;
        let r = detect_lazy(&t, &LazyConfig::default());
        assert_eq!(r.behavior_histogram.values().sum::<usize>(), t.thoughts.len());
        assert_eq!(r.behavior_histogram[&BehaviorCategory::Reflection], 1);
        assert_eq!(r.behavior_histogram.len(), 4);
    }

    fn with_thoughts(cats: &[BehaviorCategory]) -> Trajectory {
        Trajectory {
            thoughts: cats
                .iter()
                .map(|c| Thought {
                    text: String::new(),
                    category: *c,
                    start: 0,
                    end: 0,
                })
                .collect(),
            ..Trajectory::default()
        }
    }

    #[test]
    fn distribution_examples() {
        use BehaviorCategory::*;
        let corpus = [with_thoughts(&[TaskDecomposition, TaskDecomposition]), with_thoughts(&[TaskDecomposition, Reflection])];
        let d = behavior_distribution(&corpus);
        assert_eq!(d[&TaskDecomposition], 0.75);
        assert_eq!(d[&Reflection], 0.25);
        assert!(behavior_distribution(&[]).is_empty());
        let only = behavior_distribution(&[with_thoughts(&[Reflection, Reflection])]);
        assert_eq!(only.len(), 1);
        assert_eq!(only[&Reflection], 1.0);
    }

    proptest! {
        #[test]
        fn zero_thresholds_flag_any_reflection(extra in 0usize..20) {
            let cfg = LazyConfig { min_tokens: 0, min_reflections: 0, ..LazyConfig::default() };
            prop_assert!(detect_lazy(&traj(&body(1 + extra, 1)), &cfg).is_lazy);
        }

        #[test]
        fn monotone_under_augmentation(tokens in 0usize..600, refl in 0usize..8, add_t in 0usize..200, add_r in 0usize..5) {
            let cfg = LazyConfig::default();
            let before = detect_lazy(&traj(&body(tokens.max(refl), refl)), &cfg).is_lazy;
            let after = detect_lazy(&traj(&body(tokens.max(refl) + add_t + add_r, refl + add_r)), &cfg).is_lazy;
            prop_assert!(!before || after);
        }
    }
}
