//! Multi-agent Almgren-Chriss liquidation environment.
//!
//! All agents trade simultaneously within a step. Permanent and temporary
//! impact are both evaluated on the aggregate volume, so every agent receives
//! the same execution price. Agents only ever see an [`Observation`]: market
//! returns, the fraction of trades left, and their own inventory fraction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Almgren-Chriss market constants, fixed at the start of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Decision price P0 (currency/share).
    pub initial_price: f64,
    /// Annual volatility used when deriving `sigma_step`.
    pub annual_volatility_fraction: f64,
    pub bid_ask_spread: f64,
    /// Average daily traded volume (shares/day).
    pub daily_volume: f64,
    pub trading_days_per_year: f64,
    /// Liquidation horizon T in days.
    pub liquidation_horizon_days: f64,
    /// Number of trades N.
    pub num_trades: usize,
    /// Days per trade; always `liquidation_horizon_days / num_trades`.
    pub tau: f64,
    /// Fixed selling cost per share (currency/share).
    pub epsilon: f64,
    /// Temporary impact coefficient (currency·day/share²).
    pub eta: f64,
    /// Permanent impact coefficient (currency/share²).
    pub gamma: f64,
    /// Absolute price volatility (currency/share/√day).
    pub sigma_step: f64,
}

impl MarketParams {
    /// Derives the impact and volatility constants from market conventions:
    ///
    /// * `epsilon` is half the spread,
    /// * `eta` makes trading 1% of daily volume cost one spread,
    /// * `gamma` makes trading 10% of daily volume depress the price one spread,
    /// * `sigma_step = P0 · annual_vol / √(trading days)`.
    pub fn from_conventions(
        initial_price: f64,
        annual_volatility_fraction: f64,
        bid_ask_spread: f64,
        daily_volume: f64,
        trading_days_per_year: f64,
        liquidation_horizon_days: f64,
        num_trades: usize,
    ) -> Self {
        let daily_vol = annual_volatility_fraction / trading_days_per_year.sqrt();
        MarketParams {
            initial_price,
            annual_volatility_fraction,
            bid_ask_spread,
            daily_volume,
            trading_days_per_year,
            liquidation_horizon_days,
            num_trades,
            tau: liquidation_horizon_days / num_trades as f64,
            epsilon: bid_ask_spread / 2.0,
            eta: bid_ask_spread / (0.01 * daily_volume),
            gamma: bid_ask_spread / (0.1 * daily_volume),
            sigma_step: daily_vol * initial_price,
        }
    }

    /// Six-client desk parameters: P0 = 50, spread 1/8, 50M shares/day,
    /// 0.12 annual volatility over 250 days, 60 days in 240 trades.
    pub fn reference() -> Self {
        Self::from_conventions(50.0, 0.12, 0.125, 5.0e7, 250.0, 60.0, 240)
    }

    /// η − γτ/2; must be positive for the utility to be strictly convex.
    pub fn eta_tilde(&self) -> f64 {
        self.eta - 0.5 * self.gamma * self.tau
    }

    /// Permanent impact g(v) = γ·v.
    pub fn permanent_impact(&self, rate: f64) -> f64 {
        self.gamma * rate
    }

    /// Temporary impact h(v) = ε·sgn(v) + η·v, with sgn(0) = 0.
    pub fn temporary_impact(&self, rate: f64) -> f64 {
        let sign = if rate > 0.0 {
            1.0
        } else if rate < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.epsilon * sign + self.eta * rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trades < 1 {
            return Err(Error::InvalidParams("num_trades must be at least 1".into()));
        }
        let named = [
            ("initial_price", self.initial_price),
            ("liquidation_horizon_days", self.liquidation_horizon_days),
            ("epsilon", self.epsilon),
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("sigma_step", self.sigma_step),
            ("tau", self.tau),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.initial_price <= 0.0 {
            return Err(Error::InvalidParams("initial_price must be > 0".into()));
        }
        if self.tau != self.liquidation_horizon_days / self.num_trades as f64 {
            return Err(Error::InvalidParams(format!(
                "tau must equal T/N = {}, got {}",
                self.liquidation_horizon_days / self.num_trades as f64,
                self.tau
            )));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidParams("tau must be > 0".into()));
        }
        if self.eta_tilde() <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "eta - gamma*tau/2 must be > 0, got {}",
                self.eta_tilde()
            )));
        }
        Ok(())
    }
}

/// Distribution of the per-step price shock ξ (zero mean, unit variance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriceNoise {
    #[default]
    Gaussian,
    /// ±1 with equal probability.
    Rademacher,
    /// ξ ≡ 0.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Number D of log-returns in each observation.
    pub return_window: usize,
    pub price_noise: PriceNoise,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { return_window: 5, price_noise: PriceNoise::Gaussian }
    }
}

/// Full environment state. Never handed to an agent directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub step_index: usize,
    pub num_trades: usize,
    pub price: f64,
    /// Most recent log-returns, oldest first.
    pub log_return_window: Vec<f64>,
    pub inventories: Vec<f64>,
    pub initial_inventories: Vec<f64>,
}

impl MarketState {
    pub fn new(params: &MarketParams, initial_inventories: &[f64], return_window: usize) -> Result<Self> {
        params.validate()?;
        if initial_inventories.is_empty() {
            return Err(Error::InvalidParams("at least one agent is required".into()));
        }
        if let Some(bad) = initial_inventories.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidParams(format!("initial inventories must be > 0, got {bad}")));
        }
        Ok(MarketState {
            step_index: 0,
            num_trades: params.num_trades,
            price: params.initial_price,
            log_return_window: vec![0.0; return_window],
            inventories: initial_inventories.to_vec(),
            initial_inventories: initial_inventories.to_vec(),
        })
    }

    pub fn num_agents(&self) -> usize {
        self.inventories.len()
    }

    pub fn is_done(&self) -> bool {
        self.step_index >= self.num_trades || self.inventories.iter().all(|&x| x == 0.0)
    }

    pub fn trades_remaining(&self) -> usize {
        self.num_trades - self.step_index
    }

    /// Advances one trading interval given each agent's selling fraction and
    /// the standardized price shock `xi`.
    pub fn step(&mut self, params: &MarketParams, actions: &[f64], xi: f64) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::State(format!("step called on finished episode at step {}", self.step_index)));
        }
        if actions.len() != self.num_agents() {
            return Err(Error::Shape(format!(
                "expected {} actions, got {}",
                self.num_agents(),
                actions.len()
            )));
        }
        if let Some((j, a)) = actions.iter().enumerate().find(|(_, a)| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Range(format!("action {a} for agent {j} is outside [0, 1]")));
        }

        let final_step = self.step_index + 1 == self.num_trades;
        let executed: Vec<f64> = actions
            .iter()
            .zip(&self.inventories)
            .map(|(&a, &x)| if final_step { x } else { (a * x).clamp(0.0, x) })
            .collect();
        let aggregate: f64 = executed.iter().sum();
        let rate = aggregate / params.tau;

        let prev_price = self.price;
        let execution_price = prev_price - params.temporary_impact(rate);
        let new_price =
            prev_price + params.sigma_step * params.tau.sqrt() * xi - params.tau * params.permanent_impact(rate);
        let log_return = (new_price / prev_price).ln();
        if !log_return.is_finite() {
            return Err(Error::NonFinite {
                context: format!("log-return at step {} (price {prev_price} -> {new_price})", self.step_index + 1),
            });
        }

        for (x, n) in self.inventories.iter_mut().zip(&executed) {
            *x = if final_step { 0.0 } else { *x - n };
        }
        if !self.log_return_window.is_empty() {
            self.log_return_window.remove(0);
            self.log_return_window.push(log_return);
        }
        self.price = new_price;
        self.step_index += 1;

        let captures = executed.iter().map(|n| n * execution_price).collect();
        Ok(StepOutcome {
            executed_shares: executed,
            execution_price,
            new_price,
            captures,
            done: self.is_done(),
        })
    }

    pub fn observe(&self, agent: usize) -> Result<Observation> {
        let len = self.num_agents();
        if agent >= len {
            return Err(Error::Index { index: agent, len });
        }
        Ok(Observation {
            log_returns: self.log_return_window.clone(),
            trades_remaining_fraction: self.trades_remaining() as f64 / self.num_trades as f64,
            inventory_fraction: self.inventories[agent] / self.initial_inventories[agent],
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// What one agent is allowed to see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub log_returns: Vec<f64>,
    pub trades_remaining_fraction: f64,
    pub inventory_fraction: f64,
}

impl Observation {
    /// Flattened network input `[r_{k-D+1}, .., r_k, m_k, l_{j,k}]`.
    pub fn to_features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.log_returns.len() + 2);
        v.extend_from_slice(&self.log_returns);
        v.push(self.trades_remaining_fraction);
        v.push(self.inventory_fraction);
        v
    }

    pub fn dim(return_window: usize) -> usize {
        return_window + 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub executed_shares: Vec<f64>,
    pub execution_price: f64,
    pub new_price: f64,
    /// Cash received by each agent this step.
    pub captures: Vec<f64>,
    pub done: bool,
}

/// A [`MarketState`] paired with its parameters and a seeded shock generator.
#[derive(Debug, Clone)]
pub struct MarketEnv {
    params: MarketParams,
    config: EnvConfig,
    state: MarketState,
    rng: ChaCha8Rng,
}

impl MarketEnv {
    pub fn reset(params: MarketParams, config: EnvConfig, initial_inventories: &[f64], seed: u64) -> Result<Self> {
        let state = MarketState::new(&params, initial_inventories, config.return_window)?;
        Ok(MarketEnv { params, config, state, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Starts a new episode with the same inventories, keeping the shock stream.
    pub fn restart(&mut self) {
        let inv = self.state.initial_inventories.clone();
        self.state = MarketState::new(&self.params, &inv, self.config.return_window)
            .expect("parameters were validated at construction");
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &MarketState {
        &self.state
    }

    pub fn draw_shock(&mut self) -> f64 {
        match self.config.price_noise {
            PriceNoise::Gaussian => StandardNormal.sample(&mut self.rng),
            PriceNoise::Rademacher => {
                if rand::Rng::random::<bool>(&mut self.rng) {
                    1.0
                } else {
                    -1.0
                }
            }
            PriceNoise::Zero => 0.0,
        }
    }

    pub fn step(&mut self, actions: &[f64]) -> Result<StepOutcome> {
        if self.state.is_done() {
            return Err(Error::State("step called on finished episode".into()));
        }
        let xi = self.draw_shock();
        self.state.step(&self.params, actions, xi)
    }

    pub fn step_with_shock(&mut self, actions: &[f64], xi: f64) -> Result<StepOutcome> {
        self.state.step(&self.params, actions, xi)
    }

    pub fn observe(&self, agent: usize) -> Result<Observation> {
        self.state.observe(agent)
    }
}
