//! Group-relative advantages with entropy reshaping.
//!
//! Rewards in a group are standardized into a per-rollout advantage that is
//! broadcast over every token of that rollout. Tokens whose advantage is
//! degenerate (|A| < ζ by default) receive `ψ(H) = min(α·H, δ)` instead, where
//! `H` is a detached per-token entropy. The surrogate objective is the usual
//! clipped ratio objective minus a low-variance KL estimate against a
//! reference policy.

pub mod toy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{RolloutGroup, TokenRecord};

#[derive(Debug, Error, PartialEq)]
pub enum AdvantageError {
    #[error("group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("log-probability must be <= 0, got {0}")]
    InvalidLogprob(f64),
    #[error("rollout {rollout} has no token records")]
    MissingTokenData { rollout: usize },
    #[error("importance ratio must be > 0, got {0}")]
    InvalidRatio(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    /// Divide by G.
    #[default]
    Population,
    /// Divide by G - 1.
    Sample,
}

impl std::str::FromStr for StdMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "population" | "pop" => Ok(StdMode::Population),
            "sample" => Ok(StdMode::Sample),
            other => Err(format!("unknown std mode {other:?} (expected population|sample)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DAConfig {
    /// Entropy scale α.
    pub alpha: f64,
    /// Cap δ on the entropy advantage.
    pub delta: f64,
    /// Degeneracy threshold ζ.
    pub zeta: f64,
    pub epsilon_clip: f64,
    /// KL coefficient λ.
    pub kl_coef: f64,
    pub std_mode: StdMode,
    /// Use the signed test `A < ζ` instead of `|A| < ζ`.
    pub literal_eq7: bool,
}

impl Default for DAConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            delta: 0.5,
            zeta: 1e-8,
            epsilon_clip: 0.2,
            kl_coef: 0.001,
            std_mode: StdMode::Population,
            literal_eq7: false,
        }
    }
}

impl DAConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0) {
            return Err(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.delta > 0.0) {
            return Err(format!("delta must be > 0, got {}", self.delta));
        }
        if !(self.zeta > 0.0) {
            return Err(format!("zeta must be > 0, got {}", self.zeta));
        }
        if !(self.epsilon_clip >= 0.0 && self.epsilon_clip < 1.0) {
            return Err(format!("epsilon_clip must be in [0, 1), got {}", self.epsilon_clip));
        }
        if !(self.kl_coef >= 0.0) {
            return Err(format!("kl_coef must be >= 0, got {}", self.kl_coef));
        }
        Ok(())
    }

    /// Whether a raw advantage is replaced by the entropy term.
    pub fn is_degenerate(&self, a: f64) -> bool {
        if self.literal_eq7 {
            a < self.zeta
        } else {
            a.abs() < self.zeta
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvantageSource {
    Reward,
    Entropy,
}

/// How a token's entropy was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyEstimator {
    /// Entropy of the full next-token distribution.
    FullVocab,
    /// `-log p` of the sampled token.
    Surprisal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageRecord {
    pub a_raw: f64,
    pub a_hat: f64,
    pub source: AdvantageSource,
    pub entropy: f64,
    pub estimator: EntropyEstimator,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn group_std(rewards: &[f64], mode: StdMode) -> f64 {
    let m = mean(rewards);
    let ss: f64 = rewards.iter().map(|r| (r - m) * (r - m)).sum();
    let denom = match mode {
        StdMode::Population => rewards.len() as f64,
        StdMode::Sample => (rewards.len() - 1) as f64,
    };
    (ss / denom).sqrt()
}

/// `(R_i - mean) / std` per rollout; all zeros when `std < zeta`.
pub fn group_advantage(rewards: &[f64], std_mode: StdMode, zeta: f64) -> Result<Vec<f64>, AdvantageError> {
    if rewards.len() < 2 {
        return Err(AdvantageError::GroupTooSmall(rewards.len()));
    }
    let m = mean(rewards);
    let sd = group_std(rewards, std_mode);
    if sd < zeta {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - m) / sd).collect())
}

/// Shannon entropy in nats, with `0·log 0 = 0`.
pub fn token_entropy(dist: &[f64]) -> Result<f64, AdvantageError> {
    if dist.is_empty() {
        return Err(AdvantageError::NotADistribution("empty".into()));
    }
    if let Some(p) = dist.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(AdvantageError::NotADistribution(format!("entry {p} is not a finite non-negative number")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(AdvantageError::NotADistribution(format!("sums to {total}")));
    }
    Ok(entropy_unchecked(dist))
}

pub(crate) fn entropy_unchecked(dist: &[f64]) -> f64 {
    let h: f64 = dist.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum();
    h.max(0.0)
}

/// `-logprob` of the sampled token.
pub fn surprisal_entropy(logprob_chosen: f64) -> Result<f64, AdvantageError> {
    if !(logprob_chosen <= 0.0) {
        return Err(AdvantageError::InvalidLogprob(logprob_chosen));
    }
    Ok(-logprob_chosen)
}

/// `min(α·h, δ)`. Negative inputs are treated as zero entropy.
pub fn psi(h: f64, cfg: &DAConfig) -> f64 {
    (cfg.alpha * h.max(0.0)).min(cfg.delta)
}

/// Entropy input for one token and the estimator that produced it.
pub fn token_entropy_input(record: &TokenRecord) -> Result<(f64, EntropyEstimator), AdvantageError> {
    match record.entropy {
        Some(h) if h >= 0.0 => Ok((h, EntropyEstimator::FullVocab)),
        Some(h) => Err(AdvantageError::NotADistribution(format!("negative entropy {h}"))),
        None => Ok((surprisal_entropy(record.logprob_chosen)?, EntropyEstimator::Surprisal)),
    }
}

/// Apply the degeneracy rule token by token.
pub fn reshape_rows(
    advantages: &[f64],
    entropies: &[Vec<(f64, EntropyEstimator)>],
    cfg: &DAConfig,
) -> Result<Vec<Vec<AdvantageRecord>>, AdvantageError> {
    if advantages.len() != entropies.len() {
        return Err(AdvantageError::Shape(format!(
            "{} advantages for {} rollouts",
            advantages.len(),
            entropies.len()
        )));
    }
    Ok(advantages
        .iter()
        .zip(entropies)
        .map(|(&a, row)| {
            row.iter()
                .map(|&(h, estimator)| {
                    if cfg.is_degenerate(a) {
                        AdvantageRecord {
                            a_raw: a,
                            a_hat: psi(h, cfg),
                            source: AdvantageSource::Entropy,
                            entropy: h,
                            estimator,
                        }
                    } else {
                        AdvantageRecord {
                            a_raw: a,
                            a_hat: a,
                            source: AdvantageSource::Reward,
                            entropy: h,
                            estimator,
                        }
                    }
                })
                .collect()
        })
        .collect())
}

/// Per-token reshaped advantages for a rollout group.
pub fn reshape_advantages(group: &RolloutGroup, cfg: &DAConfig) -> Result<Vec<Vec<AdvantageRecord>>, AdvantageError> {
    if group.trajectories.len() != group.rewards.len() {
        return Err(AdvantageError::Shape(format!(
            "{} trajectories for {} rewards",
            group.trajectories.len(),
            group.rewards.len()
        )));
    }
    let advantages = group_advantage(&group.rewards, cfg.std_mode, cfg.zeta)?;
    let entropies = group
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let tokens = t.tokens.as_ref().ok_or(AdvantageError::MissingTokenData { rollout: i })?;
            tokens.iter().map(token_entropy_input).collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    reshape_rows(&advantages, &entropies, cfg)
}

/// `min(r·A, clip(r, 1-ε, 1+ε)·A)`.
pub fn surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// d surrogate / d ratio. At the clip boundary the unclipped branch is used.
pub fn surrogate_grad_ratio(ratio: f64, advantage: f64, eps: f64) -> f64 {
    if advantage > 0.0 {
        if ratio <= 1.0 + eps {
            advantage
        } else {
            0.0
        }
    } else if advantage < 0.0 {
        if ratio >= 1.0 - eps {
            advantage
        } else {
            0.0
        }
    } else {
        0.0
    }
}

/// Per-token `exp(lr - lθ) - (lr - lθ) - 1`.
pub fn kl_low_var(logp_theta: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp_theta;
    // expm1 keeps the value non-negative for tiny d
    (d.exp_m1() - d).max(0.0)
}

/// Mean low-variance KL estimate over tokens.
pub fn kl_penalty(logp_theta: &[f64], logp_ref: &[f64]) -> Result<f64, AdvantageError> {
    if logp_theta.len() != logp_ref.len() {
        return Err(AdvantageError::Shape(format!(
            "{} policy logprobs vs {} reference logprobs",
            logp_theta.len(),
            logp_ref.len()
        )));
    }
    if logp_theta.is_empty() {
        return Ok(0.0);
    }
    Ok(logp_theta.iter().zip(logp_ref).map(|(t, r)| kl_low_var(*t, *r)).sum::<f64>() / logp_theta.len() as f64)
}

/// Average over rollouts of the per-rollout token mean. Empty rollouts add 0.
pub fn sequence_mean(rows: &[Vec<f64>]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter()
        .filter(|r| !r.is_empty())
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .sum::<f64>()
        / rows.len() as f64
}

/// Clipped surrogate averaged per rollout then over the group, minus `λ·kl`.
pub fn clipped_objective(ratios: &[Vec<f64>], advantages: &[Vec<f64>], kl: f64, cfg: &DAConfig) -> Result<f64, AdvantageError> {
    if ratios.len() != advantages.len() || ratios.iter().zip(advantages).any(|(r, a)| r.len() != a.len()) {
        return Err(AdvantageError::Shape("ratios and advantages differ in shape".into()));
    }
    if let Some(r) = ratios.iter().flatten().find(|r| !(**r > 0.0)) {
        return Err(AdvantageError::InvalidRatio(*r));
    }
    let terms: Vec<Vec<f64>> = ratios
        .iter()
        .zip(advantages)
        .map(|(rs, as_)| rs.iter().zip(as_).map(|(r, a)| surrogate(*r, *a, cfg.epsilon_clip)).collect())
        .collect();
    Ok(sequence_mean(&terms) - cfg.kl_coef * kl)
}

/// Summary statistics for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub prompt_id: String,
    pub size: usize,
    pub mean_reward: f64,
    pub std: f64,
    pub degenerate: bool,
    pub tokens: usize,
    pub entropy_fraction: f64,
}

pub fn summarize(group: &RolloutGroup, records: &[Vec<AdvantageRecord>], cfg: &DAConfig) -> GroupSummary {
    let std = group_std(&group.rewards, cfg.std_mode);
    let tokens: usize = records.iter().map(Vec::len).sum();
    let entropy = records.iter().flatten().filter(|r| r.source == AdvantageSource::Entropy).count();
    GroupSummary {
        prompt_id: group.prompt_id.clone(),
        size: group.size(),
        mean_reward: mean(&group.rewards),
        std,
        degenerate: std < cfg.zeta,
        tokens,
        entropy_fraction: if tokens == 0 { 0.0 } else { entropy as f64 / tokens as f64 },
    }
}
