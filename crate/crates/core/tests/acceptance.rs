//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::cell::OnceCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use fairliq::analytics::{
    expected_shortfall, optimal_trajectory, optimal_utility, realized_shortfall, step_reward, utility, Trajectory,
};
use fairliq::experiment::{desk_scenario, median, run_comparison, ComparisonReport, Variant};
use fairliq::fairness::{build_weights, ggi, DEFAULT_TIE_EPSILON};
use fairliq::maddpg::{AgentRuntime, AgentSpec, NetworkConfig, TrainConfig};
use fairliq::market_env::{EnvConfig, MarketEnv, MarketParams, PriceNoise};
use fairliq::rl_core::{Activation, Mlp, Transition};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn optimal_trajectory_matches_numerical_minimum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let instances = [(MarketParams::reference(), 1e6), (desk_scenario().market, 5e3)];
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (params, scale) in &instances {
        for m in [2, 4, 8, 16] {
            for lambda in [0.0, 1e-6, 1e-4] {
                for _ in 0..5 {
                    let x0 = scale * rng.random_range(0.05..2.0);
                    let traj = optimal_trajectory(x0, m, params, lambda).map_err(|e| e.to_string())?;
                    let u = utility(&traj, params, lambda).map_err(|e| e.to_string())?.utility;
                    let (_, u_ref) = qp_minimize(params, lambda, x0, m);
                    let e = rel_err(u, u_ref);
                    worst = worst.max(e);
                    cases += 1;
                    ensure(e < 1e-6, || format!("M={m} λ={lambda} X={x0}: {u} vs {u_ref}"))?;
                }
            }
        }
    }
    Ok(format!("{cases} instances, worst relative error {worst:.2e}"))
}

fn rewards_telescope() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let sc = desk_scenario();
    let noises = [PriceNoise::Gaussian, PriceNoise::Rademacher, PriceNoise::Zero];
    let mut worst: f64 = 0.0;
    for episode in 0..100 {
        let cfg = EnvConfig { price_noise: noises[episode % 3], ..sc.env.clone() };
        let mut env = MarketEnv::reset(sc.market.clone(), cfg, &sc.initial_shares(), episode as u64).unwrap();
        let j = sc.agents.len();
        let mut totals = vec![0.0; j];
        let skew: Vec<f64> = (0..j).map(|_| rng.random_range(0.5..4.0)).collect();
        while !env.state().is_done() {
            let before = env.state().inventories.clone();
            let steps_before = env.state().trades_remaining();
            let actions: Vec<f64> = skew.iter().map(|p| rng.random::<f64>().powf(*p)).collect();
            env.step(&actions).map_err(|e| e.to_string())?;
            let after = &env.state().inventories;
            for (a, spec) in sc.agents.iter().enumerate() {
                totals[a] += step_reward(
                    before[a],
                    steps_before,
                    after[a],
                    steps_before - 1,
                    &sc.market,
                    spec.risk_aversion,
                )
                .map_err(|e| e.to_string())?;
            }
        }
        for (a, spec) in sc.agents.iter().enumerate() {
            let u0 = optimal_utility(spec.initial_shares, sc.market.num_trades, &sc.market, spec.risk_aversion).unwrap();
            let e = rel_err(totals[a], u0);
            worst = worst.max(e);
            ensure(e < 1e-9, || format!("episode {episode} agent {}: {} vs {u0}", spec.label, totals[a]))?;
        }
    }
    Ok(format!("100 episodes x 6 agents, worst relative error {worst:.2e}"))
}

fn ggi_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let desk = build_weights(&desk_scenario().initial_shares(), DEFAULT_TIE_EPSILON).unwrap();
    let random_weights = |rng: &mut ChaCha8Rng| {
        let shares: Vec<f64> = (0..6).map(|_| rng.random_range(1.0..1e6)).collect();
        build_weights(&shares, DEFAULT_TIE_EPSILON).unwrap()
    };
    let (mut perm_ok, mut pd_ok, mut mono_ok) = (0, 0, 0);
    for case in 0..1000 {
        let w = if case % 2 == 0 { desk.clone() } else { random_weights(&mut rng) };
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-100.0..100.0)).collect();
        let g = ggi(&v, &w).unwrap();

        let mut permuted = v.clone();
        permuted.shuffle(&mut rng);
        perm_ok += (ggi(&permuted, &w).unwrap() == g) as usize;

        let (i, j) = loop {
            let (i, j) = (rng.random_range(0..6), rng.random_range(0..6));
            if i != j && v[i] != v[j] {
                break if v[i] < v[j] { (i, j) } else { (j, i) };
            }
        };
        let eps = rng.random_range(0.05..0.95) * (v[j] - v[i]);
        let mut moved = v.clone();
        moved[i] += eps;
        moved[j] -= eps;
        pd_ok += (ggi(&moved, &w).unwrap() > g) as usize;

        let mut up = v.clone();
        up[rng.random_range(0..6)] += rng.random_range(0.01..10.0);
        mono_ok += (ggi(&up, &w).unwrap() > g) as usize;
    }
    let line = format!("permutation {perm_ok}/1000, Pigou-Dalton {pd_ok}/1000, monotonicity {mono_ok}/1000");
    ensure(perm_ok == 1000 && pd_ok == 1000 && mono_ok == 1000, || line.clone())?;
    Ok(line)
}

fn step_arithmetic() -> Outcome {
    let params = MarketParams::reference();
    let cfg = EnvConfig { price_noise: PriceNoise::Zero, ..EnvConfig::default() };
    let mut env = MarketEnv::reset(params.clone(), cfg, &[10_000.0], 0).unwrap();
    let out = env.step(&[1.0]).map_err(|e| e.to_string())?;
    let shortfall = realized_shortfall(&out.captures, 10_000.0, params.initial_price);
    let checks = [
        ("new price", out.new_price, 49.99975),
        ("execution price", out.execution_price, 49.9275),
        ("shortfall", shortfall, 725.0),
    ];
    for (name, got, want) in checks {
        ensure(rel_err(got, want) <= 1e-12, || format!("{name}: {got} vs {want}"))?;
    }
    Ok(format!(
        "price {}, execution price {}, shortfall {}",
        out.new_price, out.execution_price, shortfall
    ))
}

fn noiseless_realized_equals_expected() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let sc = desk_scenario();
    let m = sc.market.num_trades;
    let mut worst: f64 = 0.0;
    for s in 0..50 {
        let schedules: Vec<Vec<f64>> = sc.initial_shares().iter().map(|&x| random_schedule(&mut rng, x, m)).collect();
        let cfg = EnvConfig { price_noise: PriceNoise::Zero, ..sc.env.clone() };
        let mut env = MarketEnv::reset(sc.market.clone(), cfg, &sc.initial_shares(), s).unwrap();
        let j = schedules.len();
        let mut captures = vec![Vec::new(); j];
        for k in 0..m {
            let actions: Vec<f64> = (0..j)
                .map(|a| {
                    let held = env.state().inventories[a];
                    if held > 0.0 {
                        (schedules[a][k] / held).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let out = env.step(&actions).map_err(|e| e.to_string())?;
            for a in 0..j {
                captures[a].push(out.captures[a]);
            }
        }
        let total_x: f64 = sc.initial_shares().iter().sum();
        let combined: Vec<f64> = (0..m).map(|k| schedules.iter().map(|sched| sched[k]).sum()).collect();
        let realized: f64 = captures
            .iter()
            .zip(sc.initial_shares())
            .map(|(c, x0)| realized_shortfall(c, x0, sc.market.initial_price))
            .sum();
        let traj = Trajectory::from_sales(total_x, combined, sc.market.tau).map_err(|e| e.to_string())?;
        let expected = expected_shortfall(&traj, &sc.market).map_err(|e| e.to_string())?;
        let e = rel_err(realized, expected);
        worst = worst.max(e);
        ensure(e < 1e-9, || format!("schedule {s}: {realized} vs {expected}"))?;
    }
    Ok(format!("50 schedules, worst relative error {worst:.2e}"))
}

fn smooth_case(rng: &mut ChaCha8Rng) -> (Mlp, Vec<f64>, Vec<f64>) {
    loop {
        let mut sizes = vec![rng.random_range(1..=6)];
        for _ in 0..rng.random_range(1..=3) {
            sizes.push(rng.random_range(1..=6));
        }
        let act = [Activation::Identity, Activation::Relu, Activation::Sigmoid][rng.random_range(0..3)];
        let net = Mlp::random(&sizes, act, 1.0, rng).unwrap();
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let upstream: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |n: &Mlp, x: &[f64]| -> f64 { n.forward(x).unwrap().iter().zip(&upstream).map(|(y, c)| y * c).sum() };
        // Two step sizes agree only away from a ReLU kink.
        let smooth = (0..net.num_params()).all(|i| {
            let fd = |h: f64| {
                let mut p = net.clone();
                p.params_mut()[i] += h;
                let mut q = net.clone();
                q.params_mut()[i] -= h;
                (f(&p, &input) - f(&q, &input)) / (2.0 * h)
            };
            grad_err(fd(1e-6), fd(1e-4), 1e-6) < 1e-5
        });
        if smooth {
            return (net, input, upstream);
        }
    }
}

fn gradients_match_finite_differences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let h = 1e-6;
    let mut worst_layer: f64 = 0.0;
    for _ in 0..100 {
        let (net, input, upstream) = smooth_case(&mut rng);
        let f = |n: &Mlp, x: &[f64]| -> f64 { n.forward(x).unwrap().iter().zip(&upstream).map(|(y, c)| y * c).sum() };
        let trace = net.forward_trace(&input).unwrap();
        let mut grads = vec![0.0; net.num_params()];
        let dx = net.backward(&trace, &upstream, &mut grads).unwrap();
        for i in 0..net.num_params() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let mut q = net.clone();
            q.params_mut()[i] -= h;
            let fd = (f(&p, &input) - f(&q, &input)) / (2.0 * h);
            let e = grad_err(grads[i], fd, 1e-6);
            worst_layer = worst_layer.max(e);
            ensure(e <= 1e-4, || format!("parameter {i}: {} vs {fd}", grads[i]))?;
        }
        for i in 0..input.len() {
            let fd = central_difference(|x| f(&net, x), &input, i, h);
            let e = grad_err(dx[i], fd, 1e-6);
            worst_layer = worst_layer.max(e);
            ensure(e <= 1e-4, || format!("input {i}: {} vs {fd}", dx[i]))?;
        }
    }

    let cfg = TrainConfig {
        minibatch_size: 4,
        networks: NetworkConfig { actor_hidden: vec![6], critic_hidden: vec![6], final_layer_init: 0.3 },
        ..TrainConfig::default()
    };
    let spec = AgentSpec { label: "a".into(), initial_shares: 1000.0, risk_aversion: 1e-4 };
    let mut worst_actor: f64 = 0.0;
    let (mut checked, mut total) = (0, 0);
    for seed in 0..5 {
        let agent = AgentRuntime::new(spec.clone(), 7, &TrainConfig { seed, ..cfg.clone() }, 1).unwrap();
        let batch: Vec<Transition> = (0..4)
            .map(|_| {
                let mut obs: Vec<f64> = (0..5).map(|_| rng.random_range(-0.01..0.01)).collect();
                obs.push(rng.random());
                obs.push(rng.random());
                Transition { observation: obs.clone(), action: rng.random(), reward: 1.0, next_observation: obs, done: false }
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, g) = agent.actor_objective_gradient(&refs).unwrap();
        let objective = |net: &Mlp| {
            let mut b = agent.clone();
            b.actor = net.clone();
            b.actor_objective_gradient(&refs).unwrap().0
        };
        for i in 0..agent.actor.num_params() {
            total += 1;
            let fd_at = |h: f64| {
                let mut p = agent.actor.clone();
                p.params_mut()[i] += h;
                let mut q = agent.actor.clone();
                q.params_mut()[i] -= h;
                (objective(&p) - objective(&q)) / (2.0 * h)
            };
            let (f1, f2) = (fd_at(1e-5), fd_at(5e-6));
            if grad_err(f1, f2, 1e-9) > 1e-4 {
                continue;
            }
            checked += 1;
            let e = grad_err(g[i], f1, 1e-8);
            worst_actor = worst_actor.max(e);
            ensure(e <= 1e-3, || format!("actor objective parameter {i}: {} vs {f1}", g[i]))?;
        }
    }
    ensure(checked * 10 >= total * 9, || format!("only {checked}/{total} actor coordinates away from ReLU kinks"))?;
    Ok(format!("layer worst {worst_layer:.2e}, actor objective worst {worst_actor:.2e} ({checked}/{total} coordinates)"))
}

struct Comparison {
    report: ComparisonReport,
    seconds_per_run: f64,
}

fn desk_comparison() -> Result<Comparison, String> {
    let sc = desk_scenario();
    let start = Instant::now();
    let report = run_comparison(&sc, &[1, 2, 3, 4, 5]).map_err(|e| e.to_string())?;
    let seconds_per_run = start.elapsed().as_secs_f64() / report.runs.len() as f64;
    Ok(Comparison { report, seconds_per_run })
}

fn convergence(cmp: &Comparison) -> Outcome {
    let baseline = cmp.report.baseline.total_realized_shortfall;
    let mut failures = Vec::new();
    let mut finals = [Vec::new(), Vec::new()];
    let mut lines = Vec::new();
    for (slot, variant) in [Variant::Plain, Variant::Ggi].into_iter().enumerate() {
        for run in cmp.report.runs_of(variant).filter(|r| r.seed <= 3) {
            let (Some(last), Some(prev)) = (run.final_window_shortfall, run.previous_window_shortfall) else {
                failures.push(format!("{} seed {}: fewer than two trailing windows", variant.as_str(), run.seed));
                continue;
            };
            let drift = (last - prev).abs() / prev.abs();
            let ratio = last / baseline;
            lines.push(format!("{}/{}: {last:.1} ({ratio:.3}x, drift {:.1}%)", variant.as_str(), run.seed, 100.0 * drift));
            if !(last.is_finite() && drift < 0.10) {
                failures.push(format!("(a) {} seed {} unstable: {prev:.1} -> {last:.1}", variant.as_str(), run.seed));
            }
            if !(ratio <= 2.0) {
                failures.push(format!("(b) {} seed {}: {ratio:.4}x baseline", variant.as_str(), run.seed));
            }
            finals[slot].push(last);
        }
    }
    let plain = median(&mut finals[0]);
    let fair = median(&mut finals[1]);
    match (plain, fair) {
        (Some(p), Some(f)) => {
            let gap = (p - f).abs() / p.min(f);
            lines.push(format!("median plain {p:.1}, ggi {f:.1}, gap {:.1}%", 100.0 * gap));
            if !(gap < 0.20) {
                failures.push(format!("(c) variants differ by {:.1}%", 100.0 * gap));
            }
        }
        _ => failures.push("(c) missing converged totals".into()),
    }
    if cmp.seconds_per_run > 600.0 {
        failures.push(format!("budget: {:.0} s per run", cmp.seconds_per_run));
    }
    let detail = format!("baseline {baseline:.1}; {}; {:.0} s per run", lines.join("; "), cmp.seconds_per_run);
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} | {detail}", failures.join("; ")))
    }
}

fn fairness_direction(cmp: &Comparison) -> Outcome {
    let dispersion = |v: Variant| {
        let mut d: Vec<f64> = cmp.report.runs_of(v).filter_map(|r| r.summary.mean_pair_dispersion()).collect();
        (d.len(), median(&mut d))
    };
    let (n_plain, plain) = dispersion(Variant::Plain);
    let (n_fair, fair) = dispersion(Variant::Ggi);
    let (Some(plain), Some(fair)) = (plain, fair) else {
        return Err("no pair dispersion available".into());
    };
    let detail = format!("median pair dispersion plain {plain:.6}, ggi {fair:.6} over {n_plain}/{n_fair} seeds");
    ensure(n_plain >= 5 && n_fair >= 5 && fair < plain, || detail.clone())?;
    Ok(detail)
}

fn runs_are_byte_identical() -> Outcome {
    let mut sc = desk_scenario();
    sc.train.episodes = 60;
    let run = |fair: bool| -> Result<(String, Vec<String>), String> {
        let cfg = TrainConfig { seed: 11, fairness_enabled: fair, ..sc.train.clone() };
        let (log, trainer) =
            fairliq::maddpg::train(&sc.market, &sc.env, &sc.agents, &cfg).map_err(|e| e.to_string())?;
        let checkpoints = trainer
            .agents
            .iter()
            .map(|a| serde_json::to_string(&a.checkpoint()).unwrap())
            .collect();
        Ok((log.to_ndjson().map_err(|e| e.to_string())?, checkpoints))
    };
    for fair in [false, true] {
        let (a, b) = (run(fair)?, run(fair)?);
        ensure(a.0 == b.0, || format!("logs differ (fairness {fair})"))?;
        ensure(a.1 == b.1, || format!("checkpoints differ (fairness {fair})"))?;
    }
    Ok("logs and checkpoints identical for both variants (60 episodes)".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: &str, name: &str, budget: Option<Duration>, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(msg), Some(b)) if elapsed > b => Err(format!("over budget ({:.1?} > {b:?}); {msg}", elapsed)),
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("PASS [{id}] {name}: {msg} ({elapsed:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {msg} ({elapsed:.2?})");
            }
        }
    };
    let s = Duration::from_secs;
    report("1", "optimal trajectory vs numerical QP", Some(s(10)), &optimal_trajectory_matches_numerical_minimum);
    report("2", "reward telescoping", Some(s(30)), &rewards_telescope);
    report("3", "GGI properties", Some(s(5)), &ggi_properties);
    report("4", "environment step arithmetic", Some(s(1)), &step_arithmetic);
    report("5", "zero-noise realized = expected shortfall", Some(s(10)), &noiseless_realized_equals_expected);
    report("6", "gradient finite differences", Some(s(60)), &gradients_match_finite_differences);

    let cmp: OnceCell<Result<Comparison, String>> = OnceCell::new();
    let shared = || {
        cmp.get_or_init(|| catch_unwind(desk_comparison).unwrap_or_else(|_| Err("panicked".into()))).as_ref()
    };
    report("7", "convergence on desk scenario", None, &|| shared().map_err(Clone::clone).and_then(convergence));
    report("8", "GGI narrows within-pair dispersion", None, &|| {
        shared().map_err(Clone::clone).and_then(fairness_direction)
    });
    report("9", "determinism", Some(s(120)), &runs_are_byte_identical);

    println!("{} of 9 criteria failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
