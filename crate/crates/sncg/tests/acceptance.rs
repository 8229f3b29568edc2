//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with the measured values and pinned tolerances.
//!
//! The training-based criteria (3-6) share their runs through lazy caches;
//! the full suite takes tens of minutes on one core.

use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;

use sncg::env::{
    ArrivalPattern, DemandConfig, Environment, MultiStageEnv, PacketEnv, TaxiEnv, TripPattern,
    ZoneGraph,
};
use sncg::harness::{run_train, ExperimentConfig};
use sncg::learners::{ExplorationSchedule, LearnerConfig, LearnerKind, Trainer};
use sncg::nn::{Adam, AdamParams, Mlp, MlpGrads};
use sncg::oracle::ConvexFlowProblem;
use sncg::rng::{stream_rng, Stream, StreamRng};
use sncg::routing::{figure1_description, PathFlow, RoutingNetwork};

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} — {detail}");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn benchmark_network() -> RoutingNetwork {
    figure1_description().build().expect("benchmark builds")
}

fn benchmark_problem() -> ConvexFlowProblem {
    ConvexFlowProblem::new(benchmark_network(), vec![1.0, 1.0])
}

// ---------------------------------------------------------------- criteria 1-2

#[test]
fn criterion_1_oracle_equilibrium() {
    let start = Instant::now();
    let result = benchmark_problem().minimize_potential(1e-4, 20_000);
    let elapsed = start.elapsed();

    let expect_flows = [[0.0, 0.187, 0.813], [0.223, 0.053, 0.724]];
    let expect_costs = [[2.00, 1.14, 1.14], [1.22, 1.22, 1.22]];
    let mut worst_flow = 0.0f64;
    let mut worst_cost = 0.0f64;
    for p in 0..2 {
        for i in 0..3 {
            worst_flow = worst_flow.max((result.flows.flows[p][i] - expect_flows[p][i]).abs());
            worst_cost = worst_cost.max((result.path_costs[p][i] - expect_costs[p][i]).abs());
        }
    }
    let pass =
        result.converged && worst_flow <= 0.01 && worst_cost <= 0.01 && elapsed.as_secs_f64() < 1.0;
    report(
        "1 (oracle equilibrium)",
        pass,
        &format!(
            "max |flow error| {worst_flow:.4} (tol 0.01), max |cost error| {worst_cost:.4} \
             (tol 0.01), {:.3}s (< 1s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_gap_certification() {
    let start = Instant::now();
    let problem = benchmark_problem();
    let reference = PathFlow {
        flows: vec![vec![0.0, 0.180, 0.820], vec![0.220, 0.040, 0.740]],
    };
    let gap_ref = problem.epsilon_gap(&reference);
    let equilibrium = problem.minimize_potential(1e-4, 20_000).flows;
    let gap_eq = problem.epsilon_gap(&equilibrium);
    let elapsed = start.elapsed();

    let pass =
        (gap_ref - 0.07).abs() <= 0.005 && gap_eq <= 1e-3 && elapsed.as_secs_f64() < 1.0;
    report(
        "2 (epsilon-gap certification)",
        pass,
        &format!(
            "reference-policy gap {gap_ref:.4} (0.07 +/- 0.005), equilibrium gap {gap_eq:.2e} \
             (<= 1e-3), {:.3}s (< 1s)",
            elapsed.as_secs_f64()
        ),
    );
}

// ------------------------------------------------------------- shared training

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const PACKET_BUDGET: u64 = 16_000;
/// Multiple of the 3-stage episode so final probes read fresh-episode state.
const MULTISTAGE_BUDGET: u64 = 16_002;
const TAXI_BUDGET: u64 = 6_000;
const METRICS_EVERY: u64 = 500;
/// "Final" nu: mean over the last 4 metrics rows (trailing 2000 steps).
const NU_TAIL_ROWS: usize = 4;

fn base_config(kind: LearnerKind) -> LearnerConfig {
    LearnerConfig {
        kind,
        hidden_dim: 32,
        lr: 1e-3,
        dropout: 0.0,
        batch: 32,
        buffer_capacity: 600,
        central_buffer_capacity: 1000,
        update_start: 300,
        update_stride: 4,
        eps1: ExplorationSchedule {
            start: 0.5,
            decay: 0.999,
            floor: 0.015,
        },
        eps2: ExplorationSchedule {
            start: 1.0,
            decay: 0.999,
            floor: 0.015,
        },
        mu_entropy: 0.05,
        ..Default::default()
    }
}

fn routing_vmq_config() -> LearnerConfig {
    let mut c = base_config(LearnerKind::Vmq);
    // the suggestion supplies shared on-support exploration, so own
    // uniform exploration keeps only a residual floor
    c.eps2.floor = 0.005;
    c
}

struct RoutingRun {
    nu_tail: f64,
    gap: f64,
    value_pop2: f64,
}

fn routing_run(multistage: bool, kind: LearnerKind, seed: u64) -> RoutingRun {
    let cfg = match kind {
        LearnerKind::Vmq => routing_vmq_config(),
        k => base_config(k),
    };
    let network = benchmark_network();
    let (env, budget): (Box<dyn Environment>, u64) = if multistage {
        (
            Box::new(MultiStageEnv::new(network, &[1.0, 1.0], 100)),
            MULTISTAGE_BUDGET,
        )
    } else {
        (
            Box::new(PacketEnv::new(network, &[1.0, 1.0], 100)),
            PACKET_BUDGET,
        )
    };
    let mut trainer = Trainer::new(env, cfg, seed);
    let rows = trainer.run(budget, METRICS_EVERY, None).expect("training runs");
    let tail: Vec<f64> = rows.iter().rev().take(NU_TAIL_ROWS).map(|r| r.nu).collect();
    let nu_tail = tail.iter().sum::<f64>() / tail.len() as f64;
    let gap = if multistage {
        f64::NAN
    } else {
        let flow = trainer.mean_greedy_flow().expect("policy window filled");
        benchmark_problem().epsilon_gap(&PathFlow {
            flows: flow.f.iter().map(|pop| pop[0].clone()).collect(),
        })
    };
    let value_pop2 = trainer.mean_agent_value(1, 0).expect("value probe");
    RoutingRun {
        nu_tail,
        gap,
        value_pop2,
    }
}

fn packet_runs() -> &'static (Vec<RoutingRun>, Vec<RoutingRun>) {
    static RUNS: OnceLock<(Vec<RoutingRun>, Vec<RoutingRun>)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let vmq = SEEDS.map(|s| routing_run(false, LearnerKind::Vmq, s)).into();
        let il = SEEDS.map(|s| routing_run(false, LearnerKind::Il, s)).into();
        (vmq, il)
    })
}

fn multistage_runs() -> &'static (Vec<RoutingRun>, Vec<RoutingRun>) {
    static RUNS: OnceLock<(Vec<RoutingRun>, Vec<RoutingRun>)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let vmq = SEEDS.map(|s| routing_run(true, LearnerKind::Vmq, s)).into();
        let il = SEEDS.map(|s| routing_run(true, LearnerKind::Il, s)).into();
        (vmq, il)
    })
}

// ---------------------------------------------------------------- criteria 3-5

#[test]
fn criterion_3_vmq_packet_gap() {
    let start = Instant::now();
    let (vmq, _) = packet_runs();
    let gaps: Vec<f64> = vmq.iter().map(|r| r.gap).collect();
    let hits = gaps.iter().filter(|&&g| g <= 0.15).count();
    let per_seed = start.elapsed().as_secs_f64() / SEEDS.len() as f64;
    let pass = hits >= 3 && per_seed < 30.0 * 60.0;
    report(
        "3 (VMQ packet equilibrium gap)",
        pass,
        &format!(
            "extracted-policy gaps {gaps:.4?} (<= 0.15 in {hits}/5 seeds, need >= 3), \
             <= {per_seed:.0}s per seed (< 30 min)"
        ),
    );
}

#[test]
fn criterion_4_variance_dominance() {
    let (packet_vmq, packet_il) = packet_runs();
    let (ms_vmq, ms_il) = multistage_runs();
    let packet_wins = packet_vmq
        .iter()
        .zip(packet_il)
        .filter(|(v, i)| v.nu_tail < i.nu_tail)
        .count();
    let ms_wins = ms_vmq
        .iter()
        .zip(ms_il)
        .filter(|(v, i)| v.nu_tail < i.nu_tail)
        .count();
    let pass = packet_wins >= 4 && ms_wins >= 4;
    report(
        "4 (VMQ variance below IL)",
        pass,
        &format!(
            "final nu lower on packet in {packet_wins}/5 and on multi-stage in {ms_wins}/5 \
             matched seeds (need >= 4 on each)"
        ),
    );
}

#[test]
fn criterion_5_multistage_value_band() {
    let (vmq, _) = multistage_runs();
    let values: Vec<f64> = vmq.iter().map(|r| r.value_pop2).collect();
    let hits = values
        .iter()
        .filter(|&&v| (-1.35..=-1.10).contains(&v))
        .count();
    let pass = hits >= 3;
    report(
        "5 (multi-stage value band)",
        pass,
        &format!(
            "population-2 mean values {values:.3?} in [-1.35, -1.10] for {hits}/5 seeds \
             (need >= 3)"
        ),
    );
}

// ------------------------------------------------------------------ criterion 6

fn taxi_env(n_agents: usize) -> TaxiEnv {
    let zones = ZoneGraph::default_map(4);
    let demand = DemandConfig {
        dar: 0.5,
        arrival: ArrivalPattern::Dynamic {
            period: 100,
            amplitude: 0.5,
        },
        trip_pattern: TripPattern::Uniform,
        expiry_steps: 2,
        movement_cost: 0.1,
    };
    TaxiEnv::new(zones, demand, n_agents)
}

fn taxi_config(kind: LearnerKind) -> LearnerConfig {
    let mut c = base_config(kind);
    c.buffer_capacity = 2000;
    c.central_buffer_capacity = 2000;
    c.update_stride = 2;
    c.eps1.floor = 0.05;
    c.eps2.floor = 0.05;
    if kind == LearnerKind::Vmq {
        c.eps2.floor = 0.03;
    }
    c
}

fn taxi_reward(kind: LearnerKind, seed: u64) -> f64 {
    let mut trainer = Trainer::new(Box::new(taxi_env(40)), taxi_config(kind), seed);
    trainer.run(TAXI_BUDGET, METRICS_EVERY, None).expect("training runs");
    trainer.mean_recent_reward()
}

#[test]
fn criterion_6_taxi_reward_margin() {
    let mut lines = Vec::new();
    let mut hits = 0;
    for seed in SEEDS {
        let vmq = taxi_reward(LearnerKind::Vmq, seed);
        let mfq = taxi_reward(LearnerKind::Mfq, seed);
        let il = taxi_reward(LearnerKind::Il, seed);
        if vmq >= 1.03 * mfq && vmq >= 1.03 * il {
            hits += 1;
        }
        lines.push(format!("seed {seed}: vmq {vmq:.4} mfq {mfq:.4} il {il:.4}"));
    }
    let pass = hits >= 3;
    report(
        "6 (taxi reward margin)",
        pass,
        &format!(
            "VMQ >= 1.03x both baselines in {hits}/5 seeds (need >= 3); {}",
            lines.join("; ")
        ),
    );
}

// ------------------------------------------------------------------ criterion 7

/// Draws a random net and input whose hidden preactivations are bounded away
/// from the rectifier kink so central differences are valid.
fn smooth_case(rng: &mut StreamRng) -> (Mlp, Vec<f64>) {
    use rand::Rng;
    loop {
        let input_dim = rng.random_range(2..6);
        let hidden = rng.random_range(3..10);
        let output = rng.random_range(1..4);
        let net = Mlp::new(input_dim, hidden, output, 0.0, rng);
        let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xa = Array2::from_shape_vec((1, input_dim), x.clone()).unwrap();
        let pre = xa.dot(&net.w1.t()) + &net.b1;
        if pre.iter().all(|v| v.abs() > 1e-3) {
            return (net, x);
        }
    }
}

#[test]
fn criterion_7_numerical_substrate() {
    use rand::Rng;
    let mut rng = stream_rng(1234, Stream::Env);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (net, x) = smooth_case(&mut rng);
        let grad_out: Vec<f64> = (0..net.output_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let xa = Array2::from_shape_vec((1, x.len()), x.clone()).unwrap();
        let go = Array2::from_shape_vec((1, grad_out.len()), grad_out.clone()).unwrap();
        let (_, cache) = net.forward_train_batch(&xa, None).unwrap();
        let (grads, _) = net.backward_batch(&cache, &go);
        let gx = net.input_gradient_eval(&x, &grad_out).unwrap();

        let objective = |net: &Mlp, x: &[f64]| -> f64 {
            net.forward_eval(x)
                .unwrap()
                .iter()
                .zip(&grad_out)
                .map(|(y, g)| y * g)
                .sum()
        };
        let rel = |analytic: f64, numeric: f64| -> f64 {
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
        };
        // parameter gradients: probe a handful of coordinates per matrix
        for _ in 0..4 {
            let i = rng.random_range(0..net.hidden_dim());
            let j = rng.random_range(0..net.input_dim());
            let mut plus = net.clone();
            plus.w1[[i, j]] += h;
            let mut minus = net.clone();
            minus.w1[[i, j]] -= h;
            let numeric = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
            worst = worst.max(rel(grads.w1[[i, j]], numeric));

            let o = rng.random_range(0..net.output_dim());
            let k = rng.random_range(0..net.hidden_dim());
            let mut plus = net.clone();
            plus.w2[[o, k]] += h;
            let mut minus = net.clone();
            minus.w2[[o, k]] -= h;
            let numeric = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
            worst = worst.max(rel(grads.w2[[o, k]], numeric));
        }
        // input gradients: every coordinate
        for d in 0..x.len() {
            let mut plus = x.clone();
            plus[d] += h;
            let mut minus = x.clone();
            minus[d] -= h;
            let numeric = (objective(&net, &plus) - objective(&net, &minus)) / (2.0 * h);
            worst = worst.max(rel(gx[d], numeric));
        }
    }

    // Adam first step: magnitude lr for any well-scaled gradient
    let lr = 3e-3;
    let mut init = stream_rng(7, Stream::CentralInit);
    let mut net = Mlp::new(2, 3, 1, 0.0, &mut init);
    let before = net.w1[[0, 0]];
    let mut adam = Adam::new(&net, AdamParams::with_lr(lr));
    let g = 100.0;
    let grads = MlpGrads {
        w1: Array2::from_elem((3, 2), g),
        b1: ndarray::Array1::from_elem(3, g),
        w2: Array2::from_elem((1, 3), g),
        b2: ndarray::Array1::from_elem(1, g),
    };
    adam.step(&mut net, &grads).unwrap();
    let step_mag = (net.w1[[0, 0]] - before).abs();
    let adam_err = (step_mag - lr).abs();

    let pass = worst < 1e-4 && adam_err < 1e-9 * lr;
    report(
        "7 (numerical substrate)",
        pass,
        &format!(
            "worst finite-difference rel. err {worst:.2e} over 100 cases (< 1e-4); \
             Adam first-step |{step_mag:.6e} - lr| = {adam_err:.2e} (< 1e-9 * lr)"
        ),
    );
}

// ------------------------------------------------------------------ criterion 8

#[test]
fn criterion_8_invariants() {
    use rand::Rng;
    let mut failures: Vec<String> = Vec::new();

    // mass conservation: executed flow sums to each population's mass
    {
        let network = benchmark_network();
        let mut env = PacketEnv::new(network, &[1.0, 1.0], 100);
        let mut rng = stream_rng(11, Stream::Env);
        env.reset(&mut rng);
        for _ in 0..20 {
            let pending = env.pending();
            let actions: Vec<usize> = pending.iter().map(|_| rng.random_range(0..3)).collect();
            let out = env.step(&actions, &mut rng).unwrap();
            for (p, pop) in out.flow.f.iter().enumerate() {
                let total: f64 = pop.iter().flatten().sum();
                if (total - 1.0).abs() > 1e-12 {
                    failures.push(format!("population {p} flow mass {total}"));
                }
            }
            if out.episode_done {
                env.reset(&mut rng);
            }
        }
    }

    // anonymity: permuting which agents take which action within a
    // population leaves the flow and cost profile identical
    {
        let mk = || {
            let network = benchmark_network();
            let mut env = PacketEnv::new(network, &[1.0, 1.0], 50);
            let mut rng = stream_rng(12, Stream::Env);
            env.reset(&mut rng);
            (env, rng)
        };
        let (mut env_a, mut rng_a) = mk();
        let (mut env_b, mut rng_b) = mk();
        let n = env_a.pending().len();
        let mut actions: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let out_a = env_a.step(&actions, &mut rng_a).unwrap();
        // same multiset of actions per population, different assignment
        let half = n / 2;
        actions[..half].reverse();
        actions[half..].reverse();
        let out_b = env_b.step(&actions, &mut rng_b).unwrap();
        if out_a.flow.f != out_b.flow.f {
            failures.push("flow changed under agent permutation".into());
        }
        let total_a: f64 = out_a.rewards.iter().map(|(_, r)| r).sum();
        let total_b: f64 = out_b.rewards.iter().map(|(_, r)| r).sum();
        if (total_a - total_b).abs() > 1e-12 {
            failures.push(format!("reward total changed: {total_a} vs {total_b}"));
        }
    }

    // taxi: agents conserved, demand expires on schedule
    {
        let mut env = taxi_env(30);
        let mut rng = stream_rng(13, Stream::Env);
        env.reset(&mut rng);
        for _ in 0..200 {
            let pending = env.pending();
            let actions: Vec<usize> = pending.iter().map(|_| rng.random_range(0..4)).collect();
            env.step(&actions, &mut rng).unwrap();
            if !env.global_state().check_conservation(env.structure()) {
                failures.push("taxi population mass not conserved".into());
            }
            if env.max_demand_age() >= 2 {
                failures.push(format!("demand aged to {} (expiry 2)", env.max_demand_age()));
            }
        }
    }

    // realized DAR within 5%
    {
        let zones = ZoneGraph::default_map(4);
        let demand = DemandConfig {
            dar: 0.5,
            arrival: ArrivalPattern::Static,
            trip_pattern: TripPattern::Uniform,
            expiry_steps: 2,
            movement_cost: 0.0,
        };
        let env = TaxiEnv::new(zones, demand, 40);
        let mut rng = stream_rng(14, Stream::Env);
        let steps = 20_000u64;
        let total: usize = (0..steps).map(|t| env.generate_demand(t, &mut rng).len()).sum();
        let realized = total as f64 / steps as f64 / 40.0;
        if (realized - 0.5).abs() / 0.5 > 0.05 {
            failures.push(format!("realized DAR {realized:.4} vs 0.5"));
        }
    }

    // oracle: monotone descent and dominance over a feasible grid
    {
        let problem = benchmark_problem();
        let mut last = f64::INFINITY;
        for iters in 1..=12 {
            let r = problem.minimize_potential(1e-12, iters);
            if r.potential > last + 1e-12 {
                failures.push(format!("potential rose to {} at iter {iters}", r.potential));
            }
            last = r.potential;
        }
        let eq = problem.minimize_potential(1e-6, 20_000);
        let g = 10usize;
        for i in 0..=g {
            for j in 0..=(g - i) {
                for a in 0..=g {
                    for b in 0..=(g - a) {
                        let flows = PathFlow {
                            flows: vec![
                                vec![
                                    i as f64 / g as f64,
                                    j as f64 / g as f64,
                                    (g - i - j) as f64 / g as f64,
                                ],
                                vec![
                                    a as f64 / g as f64,
                                    b as f64 / g as f64,
                                    (g - a - b) as f64 / g as f64,
                                ],
                            ],
                        };
                        let v = problem.potential_value(&flows).unwrap();
                        if v < eq.potential - 1e-9 {
                            failures.push(format!(
                                "grid point beats equilibrium potential: {v} < {}",
                                eq.potential
                            ));
                        }
                    }
                }
            }
        }
    }

    let pass = failures.is_empty();
    report(
        "8 (invariant suites)",
        pass,
        &format!(
            "mass conservation, anonymity, taxi conservation/expiry, realized DAR, oracle \
             descent/grid-dominance: {}",
            if pass {
                "all green".to_string()
            } else {
                failures.join("; ")
            }
        ),
    );
}

// ------------------------------------------------------------------ criterion 9

#[test]
fn criterion_9_determinism() {
    let text = r#"
[env]
kind = "packet"
n_agents = 20

[learner]
kind = "vmq"
hidden_dim = 16
lr = 0.001
dropout = 0.1
batch = 16
buffer_capacity = 400
central_buffer_capacity = 400
update_start = 50

[run]
seed = 42
budget = 400
metrics_every = 50
"#;
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    let base = std::env::temp_dir().join(format!("sncg-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let dir_a = base.join("a");
    let dir_b = base.join("b");
    run_train(&cfg, &dir_a).unwrap();
    run_train(&cfg, &dir_b).unwrap();
    let bytes_a = std::fs::read(dir_a.join("metrics.csv")).unwrap();
    let bytes_b = std::fs::read(dir_b.join("metrics.csv")).unwrap();
    let pass = bytes_a == bytes_b && !bytes_a.is_empty();
    report(
        "9 (determinism)",
        pass,
        &format!(
            "repeated run metrics CSVs byte-identical: {} ({} bytes)",
            bytes_a == bytes_b,
            bytes_a.len()
        ),
    );
    let _ = std::fs::remove_dir_all(&base);
}
