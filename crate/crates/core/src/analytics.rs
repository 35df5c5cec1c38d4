//! Mean-variance cost of a liquidation schedule and its optimal trajectory.
//!
//! All quantities use the post-trade convention: `remaining[k]` is the
//! inventory held after the k-th sale, so the last entry is always zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_env::MarketParams;

/// A liquidation schedule of `origin_inventory` shares over `sales.len()` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sales: Vec<f64>,
    pub remaining: Vec<f64>,
    pub tau: f64,
    pub origin_inventory: f64,
}

impl Trajectory {
    /// Builds a trajectory from per-step sales. The cumulative sum must
    /// exhaust the inventory up to rounding; the final remaining entry is
    /// then pinned to zero.
    pub fn from_sales(origin_inventory: f64, sales: Vec<f64>, tau: f64) -> Result<Self> {
        if sales.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(Error::Contract("sales must be finite and non-negative".into()));
        }
        let mut remaining = Vec::with_capacity(sales.len());
        let mut x = origin_inventory;
        for n in &sales {
            x -= n;
            remaining.push(x);
        }
        let tol = 1e-9 * origin_inventory.abs().max(1.0);
        match remaining.last_mut() {
            Some(last) if last.abs() <= tol => *last = 0.0,
            None if origin_inventory == 0.0 => {}
            _ => {
                return Err(Error::Contract(format!(
                    "sales do not liquidate {origin_inventory} shares (left {x})"
                )))
            }
        }
        if remaining.iter().any(|&x| x < -tol) {
            return Err(Error::Contract("sales exceed the inventory".into()));
        }
        Ok(Trajectory { sales, remaining, tau, origin_inventory })
    }

    /// Sells everything in the first step.
    pub fn immediate(origin_inventory: f64, tau: f64) -> Self {
        Trajectory { sales: vec![origin_inventory], remaining: vec![0.0], tau, origin_inventory }
    }

    pub fn steps(&self) -> usize {
        self.sales.len()
    }

    fn check_shape(&self) -> Result<()> {
        if self.sales.len() != self.remaining.len() {
            return Err(Error::Shape(format!(
                "{} sales but {} remaining entries",
                self.sales.len(),
                self.remaining.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    pub expected_shortfall: f64,
    pub variance: f64,
    pub utility: f64,
    pub risk_aversion: f64,
}

/// E(x) = Σ τ·x_k·g(n_k/τ) + Σ n_k·h(n_k/τ).
pub fn expected_shortfall(traj: &Trajectory, params: &MarketParams) -> Result<f64> {
    traj.check_shape()?;
    let tau = traj.tau;
    let mut permanent = 0.0;
    let mut temporary = 0.0;
    for (&n, &x) in traj.sales.iter().zip(&traj.remaining) {
        let rate = n / tau;
        permanent += tau * x * params.permanent_impact(rate);
        temporary += n * params.temporary_impact(rate);
    }
    Ok(permanent + temporary)
}

/// V(x) = σ²·Σ τ·x_k².
pub fn variance(traj: &Trajectory, params: &MarketParams) -> Result<f64> {
    traj.check_shape()?;
    let sum_sq: f64 = traj.remaining.iter().map(|x| x * x).sum();
    Ok(params.sigma_step * params.sigma_step * traj.tau * sum_sq)
}

pub fn utility(traj: &Trajectory, params: &MarketParams, risk_aversion: f64) -> Result<UtilityBreakdown> {
    let e = expected_shortfall(traj, params)?;
    let v = variance(traj, params)?;
    Ok(UtilityBreakdown {
        expected_shortfall: e,
        variance: v,
        utility: e + risk_aversion * v,
        risk_aversion,
    })
}

/// Utility-minimizing schedule for `remaining_shares` over `remaining_steps`
/// trades of length τ.
///
/// With η̃ = η − γτ/2 the utility is η̃/τ·Σn² + λσ²τ·Σx² plus terms fixed by
/// the inventory, whose stationarity condition is the recurrence
/// `x_{k-1} − 2x_k + x_{k+1} = κ̃²τ²·x_k`, κ̃² = λσ²/η̃. Its solution with
/// x_0 = X and x_M = 0 is `x_k = X·sinh(κ(M−k)τ)/sinh(κMτ)` where
/// `cosh(κτ) = 1 + κ̃²τ²/2`; κ = 0 degenerates to uniform selling.
pub fn optimal_trajectory(
    remaining_shares: f64,
    remaining_steps: usize,
    params: &MarketParams,
    risk_aversion: f64,
) -> Result<Trajectory> {
    if remaining_steps == 0 {
        return Err(Error::Contract("optimal trajectory needs at least one step".into()));
    }
    if !(risk_aversion.is_finite() && risk_aversion >= 0.0) {
        return Err(Error::InvalidParams(format!("risk aversion must be >= 0, got {risk_aversion}")));
    }
    if !(remaining_shares.is_finite() && remaining_shares >= 0.0) {
        return Err(Error::InvalidParams(format!("inventory must be >= 0, got {remaining_shares}")));
    }
    let eta_tilde = params.eta_tilde();
    if eta_tilde <= 0.0 {
        return Err(Error::InvalidParams(format!("eta - gamma*tau/2 must be > 0, got {eta_tilde}")));
    }

    let tau = params.tau;
    let m = remaining_steps;
    let kappa_tilde_sq = risk_aversion * params.sigma_step * params.sigma_step / eta_tilde;
    let a = (0.5 * kappa_tilde_sq * tau * tau).acosh_1p();

    let mut remaining = Vec::with_capacity(m);
    if kappa_tilde_sq == 0.0 || a == 0.0 {
        for k in 1..=m {
            remaining.push(remaining_shares * (m - k) as f64 / m as f64);
        }
    } else if a.is_infinite() {
        remaining.resize(m, 0.0);
    } else {
        let denom = -(-2.0 * a * m as f64).exp_m1();
        for k in 1..=m {
            let left = (m - k) as f64;
            let numer = -(-2.0 * a * left).exp_m1();
            remaining.push(remaining_shares * (-a * k as f64).exp() * numer / denom);
        }
    }
    if let Some(last) = remaining.last_mut() {
        *last = 0.0;
    }

    let mut sales = Vec::with_capacity(m);
    let mut prev = remaining_shares;
    for &x in &remaining {
        sales.push(prev - x);
        prev = x;
    }
    Ok(Trajectory { sales, remaining, tau, origin_inventory: remaining_shares })
}

/// U(x*) for the optimal plan from `shares` with `steps` trades left.
/// Zero inventory has zero utility for any horizon.
pub fn optimal_utility(shares: f64, steps: usize, params: &MarketParams, risk_aversion: f64) -> Result<f64> {
    if shares == 0.0 {
        return Ok(0.0);
    }
    if steps == 0 {
        return Err(Error::Contract(format!("{shares} shares left with no trades remaining")));
    }
    let traj = optimal_trajectory(shares, steps, params, risk_aversion)?;
    Ok(utility(&traj, params, risk_aversion)?.utility)
}

/// Decrease in optimal remaining utility over one step:
/// `U(x*_prev) − U(x*_new)`.
pub fn step_reward(
    prev_inventory: f64,
    prev_steps: usize,
    new_inventory: f64,
    new_steps: usize,
    params: &MarketParams,
    risk_aversion: f64,
) -> Result<f64> {
    if new_steps + 1 != prev_steps {
        return Err(Error::Contract(format!(
            "reward spans one step: got {prev_steps} -> {new_steps} trades remaining"
        )));
    }
    if new_inventory > prev_inventory {
        return Err(Error::Contract(format!(
            "inventory cannot grow ({prev_inventory} -> {new_inventory})"
        )));
    }
    let before = optimal_utility(prev_inventory, prev_steps, params, risk_aversion)?;
    let after = optimal_utility(new_inventory, new_steps, params, risk_aversion)?;
    Ok(before - after)
}

/// X·P0 minus the cash captured over the episode.
pub fn realized_shortfall(episode_captures: &[f64], initial_shares: f64, initial_price: f64) -> f64 {
    initial_shares * initial_price - episode_captures.iter().sum::<f64>()
}

trait AcoshOnePlus {
    fn acosh_1p(self) -> f64;
}

impl AcoshOnePlus for f64 {
    /// acosh(1 + x) without cancellation for small x.
    fn acosh_1p(self) -> f64 {
        let x = self;
        (x + (x * (x + 2.0)).sqrt()).ln_1p()
    }
}
