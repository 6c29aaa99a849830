//! Client trustworthiness: Beta-distributed scores, the three-way
//! partition and the weight manipulation reported by risky clients.

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learning::ModelWeights;
use crate::rng::{names, Streams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("invalid trust config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrustCategory {
    FullyTrusted,
    Risky,
    Malicious,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustProfile {
    pub score: f64,
    pub category: TrustCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustConfig {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub kappa: f64,
    pub seed: u64,
}

impl TrustConfig {
    pub fn validate(&self) -> Result<(), TrustError> {
        let bad = |m: &str| Err(TrustError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad("rho must lie in (0, 1]");
        }
        if !(self.kappa >= 0.0 && self.kappa < 1.0) {
            return bad("kappa must lie in [0, 1)");
        }
        if self.kappa >= self.rho {
            return bad("kappa must be smaller than rho");
        }
        Ok(())
    }

    /// Analytic mean of the score distribution, `alpha / (alpha + beta)`.
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

pub fn sample_scores(cfg: &TrustConfig, n: usize) -> Result<Vec<f64>, TrustError> {
    cfg.validate()?;
    if n == 0 {
        return Err(TrustError::InvalidConfig("need at least one client".into()));
    }
    let dist = Beta::new(cfg.alpha, cfg.beta).map_err(|e| {
        TrustError::InvalidConfig(format!("Beta({}, {}): {e}", cfg.alpha, cfg.beta))
    })?;
    let mut rng = Streams::new(cfg.seed).rng(names::TRUST, &[]);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

pub fn classify(score: f64, rho: f64, kappa: f64) -> TrustCategory {
    if score >= rho {
        TrustCategory::FullyTrusted
    } else if score <= kappa {
        TrustCategory::Malicious
    } else {
        TrustCategory::Risky
    }
}

/// Client indices per category, each in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustPartition {
    pub fully_trusted: Vec<usize>,
    pub risky: Vec<usize>,
    pub malicious: Vec<usize>,
}

impl TrustPartition {
    pub fn len(&self) -> usize {
        self.fully_trusted.len() + self.risky.len() + self.malicious.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `U_F ∪ U_R`, ascending.
    pub fn trusted_and_risky(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .fully_trusted
            .iter()
            .chain(&self.risky)
            .copied()
            .collect();
        v.sort_unstable();
        v
    }
}

pub fn categorize(scores: &[f64], rho: f64, kappa: f64) -> TrustPartition {
    let mut part = TrustPartition::default();
    for (i, &s) in scores.iter().enumerate() {
        match classify(s, rho, kappa) {
            TrustCategory::FullyTrusted => part.fully_trusted.push(i),
            TrustCategory::Risky => part.risky.push(i),
            TrustCategory::Malicious => part.malicious.push(i),
        }
    }
    part
}

pub fn profiles(scores: &[f64], rho: f64, kappa: f64) -> Vec<TrustProfile> {
    scores
        .iter()
        .map(|&score| TrustProfile {
            score,
            category: classify(score, rho, kappa),
        })
        .collect()
}

/// Tampering applied to the weights a client reports.
pub trait AttackModel: Send + Sync {
    fn manipulate(&self, weights: &ModelWeights, score: f64) -> ModelWeights;
}

/// `w' = w * (1 + (1 - score) / 10)`, elementwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScaledWeights;

impl AttackModel for ScaledWeights {
    fn manipulate(&self, weights: &ModelWeights, score: f64) -> ModelWeights {
        manipulate_weights(weights, score)
    }
}

pub fn manipulate_weights(weights: &ModelWeights, score: f64) -> ModelWeights {
    let factor = 1.0 + (1.0 - score) / 10.0;
    weights.map(|w| w * factor)
}

/// Counts per category and a ten-bin histogram of scores on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub fully_trusted: usize,
    pub risky: usize,
    pub malicious: usize,
    pub score_histogram: [usize; 10],
    pub analytic_mean: f64,
    pub sample_mean: f64,
}

pub fn summarize(cfg: &TrustConfig, scores: &[f64], part: &TrustPartition) -> PartitionSummary {
    let mut hist = [0usize; 10];
    for &s in scores {
        hist[((s * 10.0) as usize).min(9)] += 1;
    }
    PartitionSummary {
        fully_trusted: part.fully_trusted.len(),
        risky: part.risky.len(),
        malicious: part.malicious.len(),
        score_histogram: hist,
        analytic_mean: cfg.mean(),
        sample_mean: scores.iter().sum::<f64>() / scores.len().max(1) as f64,
    }
}
