//! Generalized Gini Index welfare and the per-agent reward adjustment.
//!
//! The weight vector plays two roles. Inside the welfare function it is
//! rank-indexed: the largest weight multiplies the smallest payoff. In the
//! adjustment `r_j - w_j·G(r)` the outer factor is agent j's own share of the
//! total order volume, indexed by agent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniWeights {
    /// Rank weights, strictly decreasing and summing to one.
    pub weights: Vec<f64>,
    /// X_j / ΣX in agent order.
    pub agent_share_fractions: Vec<f64>,
}

impl GiniWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Weights from each agent's fraction of the total order volume.
///
/// Fractions are sorted decreasingly. Within a run of exactly equal values
/// the i-th member (counting from zero) is lowered by `i·tie_epsilon`, then
/// the vector is renormalized, so the result is strictly decreasing.
pub fn build_weights(initial_shares: &[f64], tie_epsilon: f64) -> Result<GiniWeights> {
    if initial_shares.is_empty() {
        return Err(Error::InvalidParams("no agents to weight".into()));
    }
    if let Some(bad) = initial_shares.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::InvalidParams(format!("order sizes must be > 0, got {bad}")));
    }
    if !(tie_epsilon.is_finite() && tie_epsilon > 0.0) {
        return Err(Error::InvalidParams(format!("tie epsilon must be > 0, got {tie_epsilon}")));
    }
    let total: f64 = initial_shares.iter().sum();
    let fractions: Vec<f64> = initial_shares.iter().map(|x| x / total).collect();

    let mut sorted = fractions.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut weights = sorted.clone();
    let mut run = 0usize;
    for i in 1..sorted.len() {
        run = if sorted[i] == sorted[i - 1] { run + 1 } else { 0 };
        weights[i] -= run as f64 * tie_epsilon;
    }
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    if weights.windows(2).any(|p| p[0] <= p[1]) || weights.iter().any(|w| *w <= 0.0) {
        return Err(Error::InvalidParams(format!(
            "tie epsilon {tie_epsilon} cannot make the weights strictly decreasing and positive"
        )));
    }
    Ok(GiniWeights { weights, agent_share_fractions: fractions })
}

/// G_w(v) = Σ w_i·v_(i), payoffs sorted increasingly against decreasing weights.
pub fn ggi(payoffs: &[f64], weights: &GiniWeights) -> Result<f64> {
    if payoffs.len() != weights.len() {
        return Err(Error::Shape(format!("{} payoffs for {} weights", payoffs.len(), weights.len())));
    }
    let mut sorted = payoffs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted.iter().zip(&weights.weights).map(|(v, w)| v * w).sum())
}

/// `r_j − share_j·G_w(r)` for every agent j.
pub fn adjust_rewards(rewards: &[f64], weights: &GiniWeights) -> Result<Vec<f64>> {
    let g = ggi(rewards, weights)?;
    Ok(rewards
        .iter()
        .zip(&weights.agent_share_fractions)
        .map(|(r, share)| r - share * g)
        .collect())
}
