//! Keyword lexicon for thought classification and reflection counting.
//!
//! Patterns are case-insensitive. A word boundary is required at each end of a
//! pattern that is a word character, so `"but "` does not match `"butter"` and
//! `"first,"` still matches `"First, I"`.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::types::BehaviorCategory;
use crate::CoreError;

pub const DEFAULT_REFLECTION: &[&str] = &["wait", "but ", "however", "alternatively", "actually", "hmm", "maybe", "perhaps"];
pub const DEFAULT_VERIFICATION: &[&str] = &["make sure", "check", "verify", "confirm", "double-check"];
pub const DEFAULT_DECOMPOSITION: &[&str] = &["break it down", "subtask", "step 1", "first,", "the steps are"];

/// Tie-break order when two categories match at the same offset.
const PRIORITY: [BehaviorCategory; 4] = [
    BehaviorCategory::Reflection,
    BehaviorCategory::Verification,
    BehaviorCategory::TaskDecomposition,
    BehaviorCategory::Deduction,
];

/// A compiled alternation over a pattern list.
#[derive(Debug, Clone)]
pub struct PatternSet {
    patterns: Vec<String>,
    regex: Option<Regex>,
}

impl PatternSet {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, CoreError> {
        let patterns: Vec<String> = patterns
            .iter()
            .map(|p| p.as_ref().to_string())
            .filter(|p| !p.is_empty())
            .collect();
        if patterns.is_empty() {
            return Ok(Self { patterns, regex: None });
        }
        // longest first so "double-check" wins over "check" at the same offset
        let mut ordered = patterns.clone();
        ordered.sort_by_key(|p| std::cmp::Reverse(p.len()));
        let alts: Vec<String> = ordered.iter().map(|p| bounded(p)).collect();
        let regex = Regex::new(&format!("(?i){}", alts.join("|")))
            .map_err(|e| CoreError::Lexicon(e.to_string()))?;
        Ok(Self {
            patterns,
            regex: Some(regex),
        })
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    /// Byte offset of the earliest match.
    pub fn first_match(&self, text: &str) -> Option<usize> {
        self.regex.as_ref()?.find(text).map(|m| m.start())
    }

    /// Number of non-overlapping matches.
    pub fn count(&self, text: &str) -> usize {
        self.regex.as_ref().map_or(0, |r| r.find_iter(text).count())
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn bounded(pattern: &str) -> String {
    let mut out = String::new();
    if pattern.chars().next().is_some_and(is_word) {
        out.push_str(r"\b");
    }
    out.push_str(&regex::escape(pattern));
    if pattern.chars().last().is_some_and(is_word) {
        out.push_str(r"\b");
    }
    format!("(?:{out})")
}

/// Category → patterns. Deduction is the residual class and normally has no
/// patterns of its own.
#[derive(Debug, Clone)]
pub struct BehaviorLexicon {
    sets: BTreeMap<BehaviorCategory, PatternSet>,
}

impl Default for BehaviorLexicon {
    fn default() -> Self {
        let mut map = BTreeMap::new();
        map.insert(BehaviorCategory::Reflection, strings(DEFAULT_REFLECTION));
        map.insert(BehaviorCategory::Verification, strings(DEFAULT_VERIFICATION));
        map.insert(BehaviorCategory::TaskDecomposition, strings(DEFAULT_DECOMPOSITION));
        Self::from_map(&map).expect("default lexicon compiles")
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// File form: `{"Reflection": ["wait", ...], ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LexiconFile(pub BTreeMap<String, Vec<String>>);

impl BehaviorLexicon {
    pub fn from_map(map: &BTreeMap<BehaviorCategory, Vec<String>>) -> Result<Self, CoreError> {
        let mut sets = BTreeMap::new();
        for (cat, pats) in map {
            sets.insert(*cat, PatternSet::new(pats)?);
        }
        Ok(Self { sets })
    }

    pub fn from_json(text: &str) -> Result<Self, CoreError> {
        let file: LexiconFile = serde_json::from_str(text).map_err(|e| CoreError::Lexicon(e.to_string()))?;
        let mut map = BTreeMap::new();
        for (name, pats) in file.0 {
            map.insert(name.parse::<BehaviorCategory>()?, pats);
        }
        Self::from_map(&map)
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::Lexicon(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_file(&self) -> LexiconFile {
        LexiconFile(
            self.sets
                .iter()
                .map(|(c, s)| (c.as_str().to_string(), s.patterns().to_vec()))
                .collect(),
        )
    }

    pub fn patterns(&self, category: BehaviorCategory) -> Option<&PatternSet> {
        self.sets.get(&category)
    }

    pub fn reflection(&self) -> Option<&PatternSet> {
        self.patterns(BehaviorCategory::Reflection)
    }

    /// Category whose patterns match earliest; ties broken by
    /// Reflection > Verification > TaskDecomposition > Deduction; Deduction when
    /// nothing matches.
    pub fn classify(&self, text: &str) -> BehaviorCategory {
        let mut best: Option<(usize, usize, BehaviorCategory)> = None;
        for (rank, cat) in PRIORITY.iter().enumerate() {
            let Some(pos) = self.sets.get(cat).and_then(|s| s.first_match(text)) else {
                continue;
            };
            if best.is_none_or(|(p, r, _)| (pos, rank) < (p, r)) {
                best = Some((pos, rank, *cat));
            }
        }
        best.map_or(BehaviorCategory::Deduction, |(_, _, c)| c)
    }
}
