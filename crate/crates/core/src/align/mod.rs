//! Alignment data: DPO preference pairs mined by embedding similarity, GRPO
//! group-standardized advantages, and reference values of both objectives.

mod embed;
mod mine;

pub use embed::{cosine, Embedder, Embedding, HttpEmbedder, TrigramEmbedder, TRIGRAM_DIM};
pub use mine::{
    group_by_prompt, mine_pairs, MiningOutcome, MiningStats, PreferencePair, DEFAULT_N_PER_PROMPT,
    DPO_SCHEMA,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::HttpError;

pub const GRPO_SCHEMA: &str = "grpo/1";
pub const ADVANTAGE_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("group has {0} rewards, at least 2 are needed")]
    GroupTooSmall(usize),
    #[error("non-finite input")]
    NonFinite,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad embedding: {0}")]
    BadEmbedding(String),
    #[error(transparent)]
    Http(#[from] HttpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpoConfig {
    pub beta: f64,
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self { beta: 0.2 }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(AlignError::InvalidConfig("beta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub kl_beta: f64,
    pub clip_eps: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            kl_beta: 0.01,
            clip_eps: 0.2,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return Err(AlignError::InvalidConfig(
                "kl_beta must be non-negative".into(),
            ));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(AlignError::InvalidConfig(
                "clip_eps must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// `(r - mean) / (std + eps)` with the population standard deviation. A
/// constant group maps to exact zeros.
pub fn grpo_advantages(rewards: &[f64]) -> Result<Vec<f64>, AlignError> {
    if rewards.len() < 2 {
        return Err(AlignError::GroupTooSmall(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(AlignError::NonFinite);
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(rewards
        .iter()
        .map(|r| (r - mean) / (std + ADVANTAGE_EPS))
        .collect())
}

/// `-ln(sigmoid(x))` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

pub fn dpo_loss(
    lp_chosen_pol: f64,
    lp_rejected_pol: f64,
    lp_chosen_ref: f64,
    lp_rejected_ref: f64,
    cfg: &DpoConfig,
) -> Result<f64, AlignError> {
    cfg.validate()?;
    let inputs = [
        lp_chosen_pol,
        lp_rejected_pol,
        lp_chosen_ref,
        lp_rejected_ref,
    ];
    if inputs.iter().any(|x| !x.is_finite()) {
        return Err(AlignError::NonFinite);
    }
    let margin = (lp_chosen_pol - lp_chosen_ref) - (lp_rejected_pol - lp_rejected_ref);
    Ok(neg_log_sigmoid(cfg.beta * margin))
}

/// Per-token KL estimator `exp(ref - new) - (ref - new) - 1`, always >= 0.
pub fn kl_estimate(logp_new: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp_new;
    // exp_m1 keeps precision for small d, where the two terms nearly cancel.
    (d.exp_m1() - d).max(0.0)
}

/// Clipped surrogate loss with a KL penalty toward the reference policy.
pub fn grpo_objective(
    logp_new: &[f64],
    logp_old: &[f64],
    logp_ref: &[f64],
    advantages: &[f64],
    cfg: &GrpoConfig,
) -> Result<f64, AlignError> {
    cfg.validate()?;
    let n = logp_new.len();
    if n == 0 || logp_old.len() != n || logp_ref.len() != n || advantages.len() != n {
        return Err(AlignError::LengthMismatch(format!(
            "new={n} old={} ref={} adv={}",
            logp_old.len(),
            logp_ref.len(),
            advantages.len()
        )));
    }
    let all = logp_new
        .iter()
        .chain(logp_old)
        .chain(logp_ref)
        .chain(advantages);
    if all.into_iter().any(|x| !x.is_finite()) {
        return Err(AlignError::NonFinite);
    }
    let (lo, hi) = (1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let mut surrogate = 0.0;
    let mut kl = 0.0;
    for i in 0..n {
        let ratio = (logp_new[i] - logp_old[i]).exp();
        let a = advantages[i];
        surrogate += (ratio * a).min(ratio.clamp(lo, hi) * a);
        kl += kl_estimate(logp_new[i], logp_ref[i]);
    }
    let n = n as f64;
    Ok(-surrogate / n + cfg.kl_beta * kl / n)
}

/// One prompt's rollouts with their rewards and advantages (`grpo/1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoGroup {
    pub prompt_id: String,
    pub completions: Vec<String>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl GrpoGroup {
    pub fn new(
        prompt_id: &str,
        completions: Vec<String>,
        rewards: Vec<f64>,
    ) -> Result<Self, AlignError> {
        if completions.len() != rewards.len() {
            return Err(AlignError::LengthMismatch(format!(
                "{} completions, {} rewards",
                completions.len(),
                rewards.len()
            )));
        }
        let advantages = grpo_advantages(&rewards)?;
        Ok(Self {
            prompt_id: prompt_id.to_string(),
            completions,
            rewards,
            advantages,
        })
    }
}
