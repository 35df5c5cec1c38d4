//! Multi-agent optimal liquidation under Almgren-Chriss market impact.
//!
//! Independent DDPG agents learn selling schedules for clients of one desk.
//! Rewards come from the decrease in each client's optimal mean-variance
//! utility and can be shifted by a Generalized Gini Index term so that
//! execution cost is spread more evenly across clients.

pub mod analytics;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod maddpg;
pub mod market_env;
pub mod rl_core;

pub use error::{Error, Result};
