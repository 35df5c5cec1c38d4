//! Scenarios, metric summaries and the plain-vs-GGI comparison driver.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, Trajectory};
use crate::error::{Error, Result};
use crate::maddpg::{self, AgentSpec, NetworkConfig, TrainConfig, TrainingLog};
use crate::market_env::{EnvConfig, MarketParams, MarketState};
use crate::rl_core::NoiseConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Episodes in the trailing window used for "expected" metrics.
    pub trailing_window: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { trailing_window: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub market: MarketParams,
    #[serde(default)]
    pub env: EnvConfig,
    pub agents: Vec<AgentSpec>,
    pub train: TrainConfig,
    /// Replication seeds for comparisons.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn six_clients(scale: f64, risk_aversion: f64) -> Vec<AgentSpec> {
    [("large-a", 500_000.0), ("large-b", 500_000.0), ("mid-a", 100_000.0), ("mid-b", 100_000.0), ("small-a", 20_000.0), ("small-b", 20_000.0)]
        .into_iter()
        .map(|(label, shares)| AgentSpec { label: label.into(), initial_shares: shares * scale, risk_aversion })
        .collect()
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.market.validate()?;
        self.train.validate()?;
        if self.agents.is_empty() {
            return Err(Error::InvalidParams("scenario has no agents".into()));
        }
        for a in &self.agents {
            a.validate()?;
        }
        let mut labels: Vec<&str> = self.agents.iter().map(|a| a.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams("agent labels must be unique".into()));
        }
        if self.metrics.trailing_window == 0 {
            return Err(Error::InvalidParams("trailing_window must be >= 1".into()));
        }
        Ok(())
    }

    pub fn initial_shares(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.initial_shares).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses and validates a scenario file. Syntax errors carry the line
    /// and column of the offending input.
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Applies a dotted `key=value` override, e.g. `train.episodes=10`.
    /// Only existing keys may be set; values are parsed as TOML.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let mut doc: toml::Table = toml::from_str(&self.to_toml()?).map_err(|e| Error::Parse(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let mut value = parse_toml_value(raw.trim());

        let (last, path) = parts.split_last().ok_or_else(|| Error::Parse("empty override key".into()))?;
        let mut table = &mut doc;
        for p in path {
            table = table
                .get_mut(*p)
                .and_then(|v| v.as_table_mut())
                .ok_or_else(|| Error::Parse(format!("unknown override key `{key}`")))?;
        }
        let slot = table.get_mut(*last).ok_or_else(|| Error::Parse(format!("unknown override key `{key}`")))?;
        if slot.is_float() {
            if let toml::Value::Integer(i) = value {
                value = toml::Value::Float(i as f64);
            }
        }
        if slot.type_str() != value.type_str() {
            return Err(Error::Parse(format!(
                "override `{key}` expects {}, got {}",
                slot.type_str(),
                value.type_str()
            )));
        }
        *slot = value;
        let text = toml::to_string(&doc).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_toml(&text)
    }
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Six clients with 500k/500k/100k/100k/20k/20k shares over 60 days in
/// 240 trades, λ = 1e-4 for everyone.
pub fn paper_scenario() -> Scenario {
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "six-client-reference".into(),
        market: MarketParams::reference(),
        env: EnvConfig::default(),
        agents: six_clients(1.0, 1e-4),
        train: TrainConfig::default(),
        seeds: vec![1, 2, 3],
        metrics: MetricsConfig::default(),
    }
}

/// The six-client book scaled down 100× (daily volume included, so impact
/// per share is unchanged) over 30 daily trades, with small networks.
pub fn desk_scenario() -> Scenario {
    let market = MarketParams::from_conventions(50.0, 0.12, 0.125, 5.0e5, 250.0, 30.0, 30);
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "six-client-desk".into(),
        market,
        env: EnvConfig::default(),
        agents: six_clients(0.01, 1e-4),
        train: TrainConfig {
            episodes: 1000,
            minibatch_size: 32,
            buffer_capacity: 50_000,
            networks: NetworkConfig { actor_hidden: vec![32, 16], critic_hidden: vec![32, 16], final_layer_init: 3e-3 },
            noise: NoiseConfig::default(),
            ..TrainConfig::default()
        },
        seeds: vec![1, 2, 3, 4, 5],
        metrics: MetricsConfig::default(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub label: String,
    pub initial_shares: f64,
    pub mean_realized_shortfall: f64,
    pub mean_expected_shortfall: f64,
    pub mean_variance: f64,
    /// Mean realized shortfall per share.
    pub per_share_shortfall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDispersion {
    pub first: String,
    pub second: String,
    /// |per-share shortfall difference| within an equal-size pair.
    pub abs_diff_per_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes_used: usize,
    pub agents: Vec<AgentMetrics>,
    pub total_realized_shortfall: f64,
    pub total_expected_shortfall: f64,
    pub total_variance: f64,
    pub pairs: Vec<PairDispersion>,
    /// Population standard deviation of the per-share shortfalls.
    pub per_share_std: f64,
}

impl MetricsSummary {
    fn from_agents(agents: Vec<AgentMetrics>, episodes_used: usize) -> Self {
        let total_realized_shortfall = agents.iter().map(|a| a.mean_realized_shortfall).sum();
        let total_expected_shortfall = agents.iter().map(|a| a.mean_expected_shortfall).sum();
        let total_variance = agents.iter().map(|a| a.mean_variance).sum();

        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (j, a) in agents.iter().enumerate() {
            groups.entry(a.initial_shares.to_bits()).or_default().push(j);
        }
        let mut pairs = Vec::new();
        for members in groups.values() {
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    pairs.push(PairDispersion {
                        first: agents[a].label.clone(),
                        second: agents[b].label.clone(),
                        abs_diff_per_share: (agents[a].per_share_shortfall - agents[b].per_share_shortfall).abs(),
                    });
                }
            }
        }
        pairs.sort_by(|a, b| a.first.cmp(&b.first));
        let n = agents.len() as f64;
        let mean = agents.iter().map(|a| a.per_share_shortfall).sum::<f64>() / n;
        let per_share_std =
            (agents.iter().map(|a| (a.per_share_shortfall - mean).powi(2)).sum::<f64>() / n).sqrt();
        MetricsSummary {
            episodes_used,
            agents,
            total_realized_shortfall,
            total_expected_shortfall,
            total_variance,
            pairs,
            per_share_std,
        }
    }

    /// Mean within-pair per-share difference across all equal-size pairs.
    pub fn mean_pair_dispersion(&self) -> Option<f64> {
        if self.pairs.is_empty() {
            None
        } else {
            Some(self.pairs.iter().map(|p| p.abs_diff_per_share).sum::<f64>() / self.pairs.len() as f64)
        }
    }
}

/// Per-agent means over the last `window` episodes of `log`.
pub fn summarize(log: &TrainingLog, specs: &[AgentSpec], window: usize) -> Result<MetricsSummary> {
    let episodes = log.episodes();
    if episodes == 0 {
        return Err(Error::Contract("cannot summarize an empty log".into()));
    }
    let start = episodes.saturating_sub(window);
    let used = episodes - start;
    let agents = specs
        .iter()
        .map(|spec| {
            let recs: Vec<_> =
                log.records.iter().filter(|r| r.episode >= start && r.agent == spec.label).collect();
            if recs.len() != used {
                return Err(Error::Contract(format!(
                    "agent {} has {} records in a {used}-episode window",
                    spec.label,
                    recs.len()
                )));
            }
            let n = used as f64;
            let realized = recs.iter().map(|r| r.realized_shortfall).sum::<f64>() / n;
            Ok(AgentMetrics {
                label: spec.label.clone(),
                initial_shares: spec.initial_shares,
                mean_realized_shortfall: realized,
                mean_expected_shortfall: recs.iter().map(|r| r.expected_shortfall).sum::<f64>() / n,
                mean_variance: recs.iter().map(|r| r.variance).sum::<f64>() / n,
                per_share_shortfall: realized / spec.initial_shares,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsSummary::from_agents(agents, used))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    Ggi,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Ggi => "ggi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub episode: usize,
    pub total_realized_shortfall: f64,
    pub total_expected_shortfall: f64,
    pub total_variance: f64,
}

pub fn convergence_series(log: &TrainingLog) -> Vec<ConvergencePoint> {
    let mut points: Vec<ConvergencePoint> = (0..log.episodes())
        .map(|episode| ConvergencePoint {
            episode,
            total_realized_shortfall: 0.0,
            total_expected_shortfall: 0.0,
            total_variance: 0.0,
        })
        .collect();
    for r in &log.records {
        let p = &mut points[r.episode];
        p.total_realized_shortfall += r.realized_shortfall;
        p.total_expected_shortfall += r.expected_shortfall;
        p.total_variance += r.variance;
    }
    points
}

/// Mean total realized shortfall over the `window` episodes ending `lag`
/// windows before the end of the series.
pub fn trailing_mean(series: &[ConvergencePoint], window: usize, lag: usize) -> Option<f64> {
    let end = series.len().checked_sub(lag * window)?;
    let start = end.checked_sub(window)?;
    if window == 0 {
        return None;
    }
    Some(series[start..end].iter().map(|p| p.total_realized_shortfall).sum::<f64>() / window as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub summary: MetricsSummary,
    pub convergence: Vec<ConvergencePoint>,
    /// Trailing-window mean total realized shortfall of the last window.
    pub final_window_shortfall: Option<f64>,
    /// Same statistic for the window before it.
    pub previous_window_shortfall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub trailing_window: usize,
    pub baseline: MetricsSummary,
    pub runs: Vec<RunResult>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn runs_of(&self, variant: Variant) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.variant == variant)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_fig1_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(FIG1_COLUMNS)?;
        for run in &self.runs {
            for p in &run.convergence {
                w.write_record([
                    run.variant.as_str().to_string(),
                    run.seed.to_string(),
                    p.episode.to_string(),
                    p.total_realized_shortfall.to_string(),
                    p.total_expected_shortfall.to_string(),
                    p.total_variance.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_fig2_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(FIG2_COLUMNS)?;
        for run in &self.runs {
            for a in &run.summary.agents {
                w.write_record([
                    run.variant.as_str().to_string(),
                    run.seed.to_string(),
                    a.label.clone(),
                    a.initial_shares.to_string(),
                    a.mean_realized_shortfall.to_string(),
                    a.mean_expected_shortfall.to_string(),
                    a.per_share_shortfall.to_string(),
                    a.mean_variance.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub const FIG1_COLUMNS: [&str; 6] =
    ["variant", "seed", "episode", "total_realized_shortfall", "total_expected_shortfall", "total_variance"];

pub const FIG2_COLUMNS: [&str; 8] = [
    "variant",
    "seed",
    "agent",
    "initial_shares",
    "mean_realized_shortfall",
    "mean_expected_shortfall",
    "per_share_shortfall",
    "mean_variance",
];

pub const BASELINE_COLUMNS: [&str; 6] =
    ["agent", "initial_shares", "realized_shortfall", "expected_shortfall", "variance", "per_share_shortfall"];

pub fn write_baseline_csv<W: Write>(summary: &MetricsSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BASELINE_COLUMNS)?;
    for a in &summary.agents {
        w.write_record([
            a.label.clone(),
            a.initial_shares.to_string(),
            a.mean_realized_shortfall.to_string(),
            a.mean_expected_shortfall.to_string(),
            a.mean_variance.to_string(),
            a.per_share_shortfall.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains one variant for one seed.
pub fn run_variant(scenario: &Scenario, variant: Variant, seed: u64) -> Result<(RunResult, TrainingLog)> {
    let config = TrainConfig { seed, fairness_enabled: variant == Variant::Ggi, ..scenario.train.clone() };
    let (log, _) = maddpg::train(&scenario.market, &scenario.env, &scenario.agents, &config).map_err(|e| match e {
        Error::NonFinite { context } => {
            Error::NonFinite { context: format!("{context} [variant {}, seed {seed}]", variant.as_str()) }
        }
        other => other,
    })?;
    let window = scenario.metrics.trailing_window;
    let convergence = convergence_series(&log);
    let result = RunResult {
        variant,
        seed,
        summary: summarize(&log, &scenario.agents, window)?,
        final_window_shortfall: trailing_mean(&convergence, window, 0),
        previous_window_shortfall: trailing_mean(&convergence, window, 1),
        convergence,
    };
    Ok((result, log))
}

/// Trains the plain and GGI variants once per seed.
pub fn run_comparison(scenario: &Scenario, seeds: &[u64]) -> Result<ComparisonReport> {
    scenario.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidParams("comparison needs at least one seed".into()));
    }
    let jobs: Vec<(Variant, u64)> =
        seeds.iter().flat_map(|&s| [(Variant::Plain, s), (Variant::Ggi, s)]).collect();
    let runs = jobs
        .par_iter()
        .map(|&(variant, seed)| run_variant(scenario, variant, seed).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        scenario: scenario.name.clone(),
        trailing_window: scenario.metrics.trailing_window,
        baseline: analytical_baseline(scenario)?,
        runs,
        notes: vec![
            "baseline: each client follows its own single-client optimal schedule, executed jointly with zero price noise; \
             it ignores cross-client impact when planning"
                .into(),
        ],
    })
}

/// Every agent follows the optimal schedule for its own order, planned as if
/// it traded alone, executed together in a noiseless shared market.
pub fn analytical_baseline(scenario: &Scenario) -> Result<MetricsSummary> {
    let params = &scenario.market;
    let shares = scenario.initial_shares();
    let plans: Vec<Trajectory> = scenario
        .agents
        .iter()
        .map(|a| analytics::optimal_trajectory(a.initial_shares, params.num_trades, params, a.risk_aversion))
        .collect::<Result<_>>()?;
    let mut state = MarketState::new(params, &shares, scenario.env.return_window)?;
    let mut captures = vec![0.0; shares.len()];
    let mut executed: Vec<Vec<f64>> = vec![Vec::new(); shares.len()];
    while !state.is_done() {
        let k = state.step_index;
        let actions: Vec<f64> = plans
            .iter()
            .zip(&state.inventories)
            .map(|(plan, &x)| if x > 0.0 { (plan.sales[k] / x).clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        let out = state.step(params, &actions, 0.0)?;
        for j in 0..shares.len() {
            captures[j] += out.captures[j];
            executed[j].push(out.executed_shares[j]);
        }
    }
    let agents = scenario
        .agents
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let traj = Trajectory::from_sales(a.initial_shares, std::mem::take(&mut executed[j]), params.tau)?;
            let realized = analytics::realized_shortfall(&[captures[j]], a.initial_shares, params.initial_price);
            Ok(AgentMetrics {
                label: a.label.clone(),
                initial_shares: a.initial_shares,
                mean_realized_shortfall: realized,
                mean_expected_shortfall: analytics::expected_shortfall(&traj, params)?,
                mean_variance: analytics::variance(&traj, params)?,
                per_share_shortfall: realized / a.initial_shares,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsSummary::from_agents(agents, 1))
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}
