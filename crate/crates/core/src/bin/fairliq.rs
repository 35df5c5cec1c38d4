use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fairliq::experiment::{self, Scenario};
use fairliq::maddpg::{AgentCheckpoint, TrainConfig, Trainer};
use fairliq::{Error, Result};

#[derive(Parser)]
#[command(name = "fairliq", version, about = "Multi-agent DDPG liquidation under Almgren-Chriss impact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Desk,
    Paper,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Dotted override, e.g. `--set train.episodes=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shortcut for `--set train.episodes=N`.
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant for one seed.
    Train {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long, value_enum, default_value = "off")]
        fairness: Switch,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Greedy rollouts of trained checkpoints on fresh price paths.
    Evaluate {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Directory holding the `checkpoints/` written by `train`.
        #[arg(long)]
        from: PathBuf,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 100)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Single-client optimal schedules executed jointly without noise.
    Baseline {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Plain vs GGI training over several seeds.
    Compare {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Comma-separated seeds; defaults to the scenario's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Print a built-in scenario as TOML.
    EmitScenario {
        #[arg(value_enum, default_value = "desk")]
        which: Builtin,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    command: String,
    seeds: Vec<u64>,
    fairness_enabled: Option<bool>,
    overrides: Vec<String>,
    scenario: Scenario,
}

fn load_scenario(args: &ScenarioArgs) -> Result<(Scenario, Vec<String>)> {
    let text = fs::read_to_string(&args.scenario)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", args.scenario.display())))?;
    let mut sc = Scenario::from_toml(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", args.scenario.display())),
        other => other,
    })?;
    let mut applied = args.overrides.clone();
    if let Some(n) = args.episodes {
        applied.push(format!("train.episodes={n}"));
    }
    for o in &applied {
        sc = sc.with_override(o)?;
    }
    Ok((sc, applied))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn manifest(command: &str, sc: &Scenario, seeds: Vec<u64>, fairness: Option<bool>, overrides: Vec<String>) -> Manifest {
    Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seeds,
        fairness_enabled: fairness,
        overrides,
        scenario: sc.clone(),
    }
}

fn train(common: &ScenarioArgs, fairness: Switch, seed: u64) -> Result<()> {
    let (sc, overrides) = load_scenario(common)?;
    let fair = fairness == Switch::On;
    let config = TrainConfig { seed, fairness_enabled: fair, ..sc.train.clone() };
    prepare_dir(&common.out)?;
    let (log, trainer) = fairliq::maddpg::train(&sc.market, &sc.env, &sc.agents, &config)?;
    fs::write(common.out.join("log.ndjson"), log.to_ndjson()?)?;
    let ck_dir = common.out.join("checkpoints");
    prepare_dir(&ck_dir)?;
    for agent in &trainer.agents {
        write_json(&ck_dir.join(format!("{}.json", agent.spec.label)), &agent.checkpoint())?;
    }
    write_json(&common.out.join("manifest.json"), &manifest("train", &sc, vec![seed], Some(fair), overrides))?;
    let summary = experiment::summarize(&log, &sc.agents, sc.metrics.trailing_window)?;
    write_json(&common.out.join("summary.json"), &summary)?;
    eprintln!(
        "trained {} episodes; trailing total realized shortfall {:.2}",
        log.episodes(),
        summary.total_realized_shortfall
    );
    Ok(())
}

fn evaluate(common: &ScenarioArgs, from: &Path, rollouts: usize, seed: u64) -> Result<()> {
    let (sc, overrides) = load_scenario(common)?;
    if rollouts == 0 {
        return Err(Error::InvalidParams("--rollouts must be >= 1".into()));
    }
    let mut trainer = Trainer::new(sc.market.clone(), sc.env.clone(), &sc.agents, sc.train.clone())?;
    for agent in &mut trainer.agents {
        let path = from.join("checkpoints").join(format!("{}.json", agent.spec.label));
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        let ck: AgentCheckpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        agent.load_checkpoint(ck)?;
    }
    trainer.reseed_market(seed)?;
    let log = trainer.evaluate(rollouts)?;
    prepare_dir(&common.out)?;
    fs::write(common.out.join("eval_log.ndjson"), log.to_ndjson()?)?;
    let summary = experiment::summarize(&log, &sc.agents, rollouts)?;
    write_json(&common.out.join("eval_summary.json"), &summary)?;
    write_json(&common.out.join("manifest.json"), &manifest("evaluate", &sc, vec![seed], None, overrides))?;
    eprintln!("evaluated {rollouts} rollouts; mean total realized shortfall {:.2}", summary.total_realized_shortfall);
    Ok(())
}

fn baseline(common: &ScenarioArgs) -> Result<()> {
    let (sc, overrides) = load_scenario(common)?;
    let summary = experiment::analytical_baseline(&sc)?;
    prepare_dir(&common.out)?;
    experiment::write_baseline_csv(&summary, fs::File::create(common.out.join("baseline.csv"))?)?;
    write_json(&common.out.join("manifest.json"), &manifest("baseline", &sc, vec![], None, overrides))?;
    eprintln!("baseline total realized shortfall {:.4}", summary.total_realized_shortfall);
    Ok(())
}

fn compare(common: &ScenarioArgs, seeds: Option<Vec<u64>>) -> Result<()> {
    let (sc, overrides) = load_scenario(common)?;
    let seeds = seeds.unwrap_or_else(|| sc.seeds.clone());
    prepare_dir(&common.out)?;
    let report = experiment::run_comparison(&sc, &seeds)?;
    fs::write(common.out.join("report.json"), report.to_json()? + "\n")?;
    report.write_fig1_csv(fs::File::create(common.out.join("fig1_convergence.csv"))?)?;
    report.write_fig2_csv(fs::File::create(common.out.join("fig2_distribution.csv"))?)?;
    experiment::write_baseline_csv(&report.baseline, fs::File::create(common.out.join("baseline.csv"))?)?;
    write_json(&common.out.join("manifest.json"), &manifest("compare", &sc, seeds, None, overrides))?;
    for run in &report.runs {
        eprintln!(
            "{:5} seed {:3}: trailing total {:.2}, mean pair dispersion {:.5}",
            run.variant.as_str(),
            run.seed,
            run.summary.total_realized_shortfall,
            run.summary.mean_pair_dispersion().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn emit(which: Builtin, out: Option<&Path>) -> Result<()> {
    let sc = match which {
        Builtin::Desk => experiment::desk_scenario(),
        Builtin::Paper => experiment::paper_scenario(),
    };
    let text = sc.to_toml()?;
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                prepare_dir(parent)?;
            }
            fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, fairness, seed } => train(&common, fairness, seed),
        Command::Evaluate { common, from, rollouts, seed } => evaluate(&common, &from, rollouts, seed),
        Command::Baseline { common } => baseline(&common),
        Command::Compare { common, seeds } => compare(&common, seeds),
        Command::EmitScenario { which, out } => emit(which, out.as_deref()),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else {
        match e {
            Error::State(_) | Error::NotReady { .. } => 1,
            _ => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(1)
        }
    }
}
