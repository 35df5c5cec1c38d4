//! Independent DDPG learners sharing one market.
//!
//! Every agent owns its actor, critic, their targets, a replay buffer, an
//! exploration process and a private RNG stream. Agents interact only through
//! the shared execution price and, when enabled, the GGI reward adjustment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, Trajectory};
use crate::error::{ensure_finite, Error, Result};
use crate::fairness::{self, GiniWeights};
use crate::market_env::{EnvConfig, MarketEnv, MarketParams, Observation};
use crate::rl_core::{
    soft_update, Activation, Adam, Mlp, MlpCheckpoint, NoiseConfig, NoiseProcess, ReplayBuffer, Transition,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub label: String,
    pub initial_shares: f64,
    pub risk_aversion: f64,
}

impl AgentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_shares.is_finite() && self.initial_shares > 0.0) {
            return Err(Error::InvalidParams(format!("agent {}: initial_shares must be > 0", self.label)));
        }
        if !(self.risk_aversion.is_finite() && self.risk_aversion >= 0.0) {
            return Err(Error::InvalidParams(format!("agent {}: risk_aversion must be >= 0", self.label)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Half-width of the uniform init of each output layer.
    pub final_layer_init: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { actor_hidden: vec![64, 32], critic_hidden: vec![64, 32], final_layer_init: 3e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub minibatch_size: usize,
    pub buffer_capacity: usize,
    /// Target-network mixing rate τ_soft.
    pub soft_update_rate: f64,
    pub discount: f64,
    pub fairness_enabled: bool,
    pub seed: u64,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    /// Stored rewards are `reward / (X_j·P0) · reward_scale`.
    pub reward_scale: f64,
    pub tie_epsilon: f64,
    pub noise: NoiseConfig,
    pub networks: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 1000,
            minibatch_size: 64,
            buffer_capacity: 100_000,
            soft_update_rate: 1e-3,
            discount: 0.99,
            fairness_enabled: false,
            seed: 0,
            actor_learning_rate: 1e-4,
            critic_learning_rate: 1e-3,
            reward_scale: 1e4,
            tie_epsilon: fairness::DEFAULT_TIE_EPSILON,
            noise: NoiseConfig::default(),
            networks: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::InvalidParams(format!("discount must be in [0, 1], got {}", self.discount)));
        }
        if self.minibatch_size == 0 || self.minibatch_size > self.buffer_capacity {
            return Err(Error::InvalidParams(format!(
                "minibatch_size {} must be in 1..=buffer_capacity {}",
                self.minibatch_size, self.buffer_capacity
            )));
        }
        if !(self.soft_update_rate > 0.0 && self.soft_update_rate <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "soft_update_rate must be in (0, 1], got {}",
                self.soft_update_rate
            )));
        }
        for (name, v) in [
            ("actor_learning_rate", self.actor_learning_rate),
            ("critic_learning_rate", self.critic_learning_rate),
            ("reward_scale", self.reward_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        self.noise.validate()
    }
}

/// An agent's networks, optimizers, replay memory and exploration state.
#[derive(Debug, Clone)]
pub struct AgentRuntime {
    pub spec: AgentSpec,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_optimizer: Adam,
    pub critic_optimizer: Adam,
    pub buffer: ReplayBuffer,
    pub noise: NoiseProcess,
    rng: ChaCha8Rng,
}

fn layer_sizes(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(1);
    s
}

fn critic_input(observation: &[f64], action: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(observation.len() + 1);
    v.extend_from_slice(observation);
    v.push(action);
    v
}

impl AgentRuntime {
    /// Random online networks with identical copies as targets. `stream`
    /// selects this agent's independent RNG stream under `seed`.
    pub fn new(spec: AgentSpec, observation_dim: usize, config: &TrainConfig, stream: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        let nets = &config.networks;
        let actor = Mlp::random(
            &layer_sizes(observation_dim, &nets.actor_hidden),
            Activation::Sigmoid,
            nets.final_layer_init,
            &mut rng,
        )?;
        let critic = Mlp::random(
            &layer_sizes(observation_dim + 1, &nets.critic_hidden),
            Activation::Identity,
            nets.final_layer_init,
            &mut rng,
        )?;
        Ok(AgentRuntime {
            spec,
            actor_optimizer: Adam::new(actor.num_params(), config.actor_learning_rate),
            critic_optimizer: Adam::new(critic.num_params(), config.critic_learning_rate),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            noise: NoiseProcess::new(config.noise.clone(), 1)?,
            rng,
        })
    }

    /// Policy output, plus exploration noise when `explore`, clamped to [0, 1].
    pub fn act(&mut self, observation: &Observation, explore: bool) -> Result<f64> {
        let mu = self.actor.forward(&observation.to_features())?[0];
        let mut a = mu;
        if explore {
            a += self.noise.sample(&mut self.rng)[0];
        }
        let a = ensure_finite(a, || format!("action of agent {}", self.spec.label))?;
        Ok(a.clamp(0.0, 1.0))
    }

    /// `y_i = r_i + γ·Q'(o'_i, μ'(o'_i))`, or `r_i` for terminal transitions.
    pub fn critic_target(&self, batch: &[&Transition], discount: f64) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|t| {
                if t.done || discount == 0.0 {
                    return Ok(t.reward);
                }
                let next_action = self.target_actor.forward(&t.next_observation)?[0];
                let q = self.target_critic.forward(&critic_input(&t.next_observation, next_action))?[0];
                Ok(t.reward + discount * q)
            })
            .collect()
    }

    /// One optimizer step on `(1/N)·Σ(y − Q)²`; returns the pre-step loss.
    pub fn update_critic(&mut self, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
        if batch.len() != targets.len() || batch.is_empty() {
            return Err(Error::Shape(format!("{} transitions for {} targets", batch.len(), targets.len())));
        }
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.critic.num_params()];
        let mut loss = 0.0;
        for (t, &y) in batch.iter().zip(targets) {
            let trace = self.critic.forward_trace(&critic_input(&t.observation, t.action))?;
            let err = trace.output()[0] - y;
            loss += err * err / n;
            self.critic.backward(&trace, &[2.0 * err / n], &mut grads)?;
        }
        ensure_finite(loss, || "critic loss".into())?;
        self.critic_optimizer.step(self.critic.params_mut(), &grads)?;
        if !self.critic.all_finite() {
            return Err(Error::NonFinite { context: "critic parameters".into() });
        }
        Ok(loss)
    }

    /// Sampled objective `(1/N)·Σ Q(o_i, μ(o_i))` and its gradient with
    /// respect to the actor parameters.
    pub fn actor_objective_gradient(&self, batch: &[&Transition]) -> Result<(f64, Vec<f64>)> {
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.actor.num_params()];
        let mut critic_scratch = vec![0.0; self.critic.num_params()];
        let mut objective = 0.0;
        for t in batch {
            let actor_trace = self.actor.forward_trace(&t.observation)?;
            let action = actor_trace.output()[0];
            let critic_trace = self.critic.forward_trace(&critic_input(&t.observation, action))?;
            objective += critic_trace.output()[0] / n;
            let dq_dinput = self.critic.backward(&critic_trace, &[1.0 / n], &mut critic_scratch)?;
            let dq_da = *dq_dinput.last().unwrap();
            self.actor.backward(&actor_trace, &[dq_da], &mut grads)?;
        }
        Ok((objective, grads))
    }

    /// One ascent step on the sampled policy objective; returns its pre-step value.
    pub fn update_actor(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Shape("empty minibatch".into()));
        }
        let (objective, mut grads) = self.actor_objective_gradient(batch)?;
        ensure_finite(objective, || "actor objective".into())?;
        grads.iter_mut().for_each(|g| *g = -*g);
        self.actor_optimizer.step(self.actor.params_mut(), &grads)?;
        if !self.actor.all_finite() {
            return Err(Error::NonFinite { context: "actor parameters".into() });
        }
        Ok(objective)
    }

    pub fn update_targets(&mut self, rate: f64) {
        soft_update(self.target_actor.params_mut(), self.actor.params(), rate);
        soft_update(self.target_critic.params_mut(), self.critic.params(), rate);
    }

    /// Sample a minibatch from this agent's own buffer and run one critic
    /// update, one actor update and a soft target update.
    pub fn learn(&mut self, config: &TrainConfig) -> Result<Option<(f64, f64)>> {
        if self.buffer.len() < config.minibatch_size {
            return Ok(None);
        }
        let buffer = std::mem::replace(&mut self.buffer, ReplayBuffer::new(1));
        let outcome = (|| -> Result<(f64, f64)> {
            let batch = buffer.sample(config.minibatch_size, &mut self.rng)?;
            let targets = self.critic_target(&batch, config.discount)?;
            let critic_loss = self.update_critic(&batch, &targets)?;
            let actor_objective = self.update_actor(&batch)?;
            Ok((critic_loss, actor_objective))
        })();
        self.buffer = buffer;
        let losses = outcome?;
        self.update_targets(config.soft_update_rate);
        Ok(Some(losses))
    }
}

/// Serialized networks of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub label: String,
    pub actor: MlpCheckpoint,
    pub critic: MlpCheckpoint,
    pub target_actor: MlpCheckpoint,
    pub target_critic: MlpCheckpoint,
}

impl AgentRuntime {
    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            label: self.spec.label.clone(),
            actor: self.actor.checkpoint(),
            critic: self.critic.checkpoint(),
            target_actor: self.target_actor.checkpoint(),
            target_critic: self.target_critic.checkpoint(),
        }
    }

    /// Replaces all four networks. Layer sizes must match the current ones.
    pub fn load_checkpoint(&mut self, ck: AgentCheckpoint) -> Result<()> {
        if ck.label != self.spec.label {
            return Err(Error::InvalidParams(format!(
                "checkpoint for agent {} loaded into agent {}",
                ck.label, self.spec.label
            )));
        }
        let load = |current: &Mlp, ck: MlpCheckpoint, name: &str| -> Result<Mlp> {
            let net = Mlp::from_checkpoint(ck)?;
            if net.sizes() != current.sizes() || net.output_activation() != current.output_activation() {
                return Err(Error::Shape(format!(
                    "{name} of agent {} has layers {:?}, expected {:?}",
                    self.spec.label,
                    net.sizes(),
                    current.sizes()
                )));
            }
            Ok(net)
        };
        let actor = load(&self.actor, ck.actor, "actor")?;
        let critic = load(&self.critic, ck.critic, "critic")?;
        let target_actor = load(&self.target_actor, ck.target_actor, "target actor")?;
        let target_critic = load(&self.target_critic, ck.target_critic, "target critic")?;
        self.actor = actor;
        self.critic = critic;
        self.target_actor = target_actor;
        self.target_critic = target_critic;
        Ok(())
    }
}

/// One agent's results for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub agent: String,
    pub total_raw_reward: f64,
    pub total_adjusted_reward: f64,
    pub realized_shortfall: f64,
    pub expected_shortfall: f64,
    pub variance: f64,
    pub noise_scale: f64,
    /// Divisor applied to adjusted rewards before storage.
    pub reward_normalizer: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpisodeRecord>,
}

impl TrainingLog {
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_ndjson(s: &str) -> Result<Self> {
        let records = s
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(TrainingLog { records })
    }

    pub fn episodes(&self) -> usize {
        self.records.iter().map(|r| r.episode + 1).max().unwrap_or(0)
    }

    /// Records of one episode, in agent order.
    pub fn episode(&self, episode: usize) -> impl Iterator<Item = &EpisodeRecord> {
        self.records.iter().filter(move |r| r.episode == episode)
    }
}

/// Raw and adjusted per-step rewards across one episode, kept for tests.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    pub raw_rewards: Vec<Vec<f64>>,
    pub stored_rewards: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

pub struct Trainer {
    pub params: MarketParams,
    pub env_config: EnvConfig,
    pub config: TrainConfig,
    pub agents: Vec<AgentRuntime>,
    pub weights: GiniWeights,
    env: MarketEnv,
}

impl Trainer {
    pub fn new(params: MarketParams, env_config: EnvConfig, specs: &[AgentSpec], config: TrainConfig) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        if specs.is_empty() {
            return Err(Error::InvalidParams("at least one agent is required".into()));
        }
        let shares: Vec<f64> = specs.iter().map(|s| s.initial_shares).collect();
        let weights = fairness::build_weights(&shares, config.tie_epsilon)?;
        let env = MarketEnv::reset(params.clone(), env_config.clone(), &shares, env_seed(config.seed))?;
        let obs_dim = Observation::dim(env_config.return_window);
        let agents = specs
            .iter()
            .enumerate()
            .map(|(j, s)| AgentRuntime::new(s.clone(), obs_dim, &config, j as u64 + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trainer { params, env_config, config, agents, weights, env })
    }

    /// Runs one episode. With `learn` the agents explore, store transitions
    /// and update; otherwise they act greedily and nothing is mutated except
    /// the environment's shock stream.
    pub fn run_episode(&mut self, episode: usize, learn: bool) -> Result<(Vec<EpisodeRecord>, EpisodeTrace)> {
        let j_count = self.agents.len();
        let n_trades = self.params.num_trades;
        self.env.restart();
        for a in &mut self.agents {
            a.noise.reset();
        }
        let normalizers: Vec<f64> = self
            .agents
            .iter()
            .map(|a| a.spec.initial_shares * self.params.initial_price / self.config.reward_scale)
            .collect();

        let mut captures = vec![0.0; j_count];
        let mut sales: Vec<Vec<f64>> = vec![Vec::with_capacity(n_trades); j_count];
        let mut raw_total = vec![0.0; j_count];
        let mut adj_total = vec![0.0; j_count];
        let mut trace = EpisodeTrace::default();

        while !self.env.state().is_done() {
            let k = self.env.state().step_index;
            let context = |e: Error| match e {
                Error::NonFinite { context } => {
                    Error::NonFinite { context: format!("{context} (episode {episode}, step {})", k + 1) }
                }
                other => other,
            };
            let observations: Vec<Observation> =
                (0..j_count).map(|j| self.env.observe(j)).collect::<Result<_>>()?;
            let prev_inventory = self.env.state().inventories.clone();
            let actions: Vec<f64> = self
                .agents
                .iter_mut()
                .zip(&observations)
                .map(|(a, o)| a.act(o, learn))
                .collect::<Result<_>>()
                .map_err(context)?;
            let outcome = self.env.step(&actions).map_err(context)?;
            let state = self.env.state();
            let prev_steps = n_trades - k;

            let raw: Vec<f64> = self
                .agents
                .iter()
                .enumerate()
                .map(|(j, a)| {
                    analytics::step_reward(
                        prev_inventory[j],
                        prev_steps,
                        state.inventories[j],
                        prev_steps - 1,
                        &self.params,
                        a.spec.risk_aversion,
                    )
                    .and_then(|r| ensure_finite(r, || format!("reward of agent {}", a.spec.label)))
                })
                .collect::<Result<_>>()
                .map_err(context)?;
            let adjusted =
                if self.config.fairness_enabled { fairness::adjust_rewards(&raw, &self.weights)? } else { raw.clone() };
            let stored: Vec<f64> = adjusted.iter().zip(&normalizers).map(|(r, z)| r / z).collect();

            for j in 0..j_count {
                captures[j] += outcome.captures[j];
                sales[j].push(outcome.executed_shares[j]);
                raw_total[j] += raw[j];
                adj_total[j] += adjusted[j];
            }

            if learn {
                let next: Vec<Vec<f64>> =
                    (0..j_count).map(|j| state.observe(j).map(|o| o.to_features())).collect::<Result<_>>()?;
                for (j, agent) in self.agents.iter_mut().enumerate() {
                    agent.buffer.store(Transition {
                        observation: observations[j].to_features(),
                        action: actions[j],
                        reward: stored[j],
                        next_observation: next[j].clone(),
                        done: outcome.done,
                    });
                }
                for agent in &mut self.agents {
                    agent.learn(&self.config).map_err(|e| match e {
                        Error::NonFinite { context } => Error::NonFinite {
                            context: format!("{context} (agent {}, episode {episode}, step {})", agent.spec.label, k + 1),
                        },
                        other => other,
                    })?;
                }
            }
            trace.raw_rewards.push(raw);
            trace.stored_rewards.push(stored);
            trace.actions.push(actions);
        }

        let steps = self.env.state().step_index;
        let mut records = Vec::with_capacity(j_count);
        for (j, agent) in self.agents.iter_mut().enumerate() {
            let x0 = agent.spec.initial_shares;
            let traj = Trajectory::from_sales(x0, std::mem::take(&mut sales[j]), self.params.tau)?;
            records.push(EpisodeRecord {
                episode,
                agent: agent.spec.label.clone(),
                total_raw_reward: raw_total[j],
                total_adjusted_reward: adj_total[j],
                realized_shortfall: analytics::realized_shortfall(&[captures[j]], x0, self.params.initial_price),
                expected_shortfall: analytics::expected_shortfall(&traj, &self.params)?,
                variance: analytics::variance(&traj, &self.params)?,
                noise_scale: agent.noise.scale(),
                reward_normalizer: normalizers[j],
                steps,
            });
            if learn {
                agent.noise.end_episode();
            }
        }
        Ok((records, trace))
    }

    pub fn train(&mut self) -> Result<TrainingLog> {
        let mut log = TrainingLog::default();
        for episode in 0..self.config.episodes {
            let (records, _) = self.run_episode(episode, true)?;
            log.records.extend(records);
        }
        Ok(log)
    }

    /// Greedy rollouts without learning.
    pub fn evaluate(&mut self, episodes: usize) -> Result<TrainingLog> {
        let mut log = TrainingLog::default();
        for episode in 0..episodes {
            let (records, _) = self.run_episode(episode, false)?;
            log.records.extend(records);
        }
        Ok(log)
    }

    /// Replaces the shock stream, e.g. to evaluate on fresh market paths.
    pub fn reseed_market(&mut self, seed: u64) -> Result<()> {
        let shares: Vec<f64> = self.agents.iter().map(|a| a.spec.initial_shares).collect();
        self.env = MarketEnv::reset(self.params.clone(), self.env_config.clone(), &shares, seed)?;
        Ok(())
    }
}

fn env_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED
}

/// Trains a fresh set of agents and returns the log with the trained trainer.
pub fn train(
    params: &MarketParams,
    env_config: &EnvConfig,
    specs: &[AgentSpec],
    config: &TrainConfig,
) -> Result<(TrainingLog, Trainer)> {
    let mut trainer = Trainer::new(params.clone(), env_config.clone(), specs, config.clone())?;
    let log = trainer.train()?;
    Ok((log, trainer))
}
