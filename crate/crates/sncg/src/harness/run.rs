//! Experiment orchestration: training runs with on-disk artifacts,
//! checkpoint save/restore, greedy evaluation and oracle certification.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::game::FlowDistribution;
use crate::learners::{MetricsRow, Trainer};
use crate::nn::{load_bundle, save_bundle, Mlp, TargetNetwork};
use crate::oracle::OracleResult;
use crate::routing::PathFlow;

use super::config::ExperimentConfig;
use super::metrics::write_metrics_csv;
use super::HarnessError;

/// Summary of a finished training run, also serialized to `summary.toml`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub learner: String,
    pub seed: u64,
    pub steps: u64,
    /// Trailing-window mean per-agent reward at the end of training.
    pub mean_reward: f64,
    /// Value-variance signal at the final observation.
    pub nu: f64,
    /// Equilibrium gap of the extracted policy (routing packet runs only).
    pub eps_gap: Option<f64>,
    /// Extracted per-population path flows (routing packet runs only).
    pub policy_flows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug)]
pub struct TrainArtifacts {
    pub out_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub summary: RunSummary,
}

/// Reinterprets a single-stage flow distribution as per-population path
/// flows (packet environments have exactly one local state per population).
fn to_path_flow(flow: &FlowDistribution) -> PathFlow {
    PathFlow {
        flows: flow.f.iter().map(|pop| pop[0].clone()).collect(),
    }
}

/// Trains per the config and writes `config.toml` (resolved snapshot),
/// `metrics.csv`, `checkpoint.ckpt` and `summary.toml` into `out_dir`.
pub fn run_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainArtifacts, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml_string())?;

    let env = cfg.env.build_env()?;
    let mut trainer = Trainer::new(env, cfg.learner.clone(), cfg.run.seed);
    let problem = cfg.env.gap_problem()?;

    let rows = match &problem {
        Some(p) => {
            let gap = |flow: &FlowDistribution| p.epsilon_gap(&to_path_flow(flow));
            trainer.run(cfg.run.budget, cfg.run.metrics_every, Some(&gap))?
        }
        None => trainer.run(cfg.run.budget, cfg.run.metrics_every, None)?,
    };
    write_metrics_csv(&out_dir.join("metrics.csv"), &rows)?;
    save_trainer(&trainer, &out_dir.join("checkpoint.ckpt"))?;

    let (eps_gap, policy_flows) = match &problem {
        Some(p) => {
            let flows = to_path_flow(&extract_policy_flow(&mut trainer)?);
            (Some(p.epsilon_gap(&flows)), Some(flows.flows))
        }
        None => (None, None),
    };
    let summary = RunSummary {
        name: cfg.name.clone(),
        learner: cfg.learner.kind.to_string(),
        seed: cfg.run.seed,
        steps: trainer.step_count,
        mean_reward: trainer.mean_recent_reward(),
        nu: trainer.current_nu()?,
        eps_gap,
        policy_flows,
    };
    std::fs::write(
        out_dir.join("summary.toml"),
        toml::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(TrainArtifacts {
        out_dir: out_dir.to_path_buf(),
        rows,
        summary,
    })
}

/// The learned single-stage policy as a flow: the mean of the trailing
/// greedy flows observed in training (the aggregate of every agent's own
/// deterministic policy). Falls back to one greedy episode when no training
/// history is available (e.g. right after loading a checkpoint).
pub fn extract_policy_flow(trainer: &mut Trainer) -> Result<FlowDistribution, HarnessError> {
    if let Some(flow) = trainer.mean_greedy_flow() {
        return Ok(flow);
    }
    let flows = trainer.greedy_rollout()?;
    Ok(flows.into_iter().next().expect("episode has at least one step"))
}

/// Saves every network of a trainer into one bundle. Only parameters are
/// stored; optimizer moments and replay buffers restart empty on load.
pub fn save_trainer(trainer: &Trainer, path: &Path) -> Result<(), HarnessError> {
    let mut nets: Vec<(String, &Mlp)> = Vec::new();
    if let Some(central) = &trainer.central {
        nets.push(("central_mu".into(), &central.mu.net));
        nets.push(("central_sigma".into(), &central.sigma.net));
    }
    for (p, row) in trainer.agents.iter().enumerate() {
        for (i, a) in row.iter().enumerate() {
            nets.push((format!("agent_{p}_{i}"), &a.q.net));
            if let Some(avg) = &a.avg_policy {
                nets.push((format!("avg_{p}_{i}"), &avg.net));
            }
        }
    }
    save_bundle(path, &nets)?;
    Ok(())
}

/// Restores all networks of a trainer from a bundle written by
/// [`save_trainer`] for the same configuration.
pub fn load_trainer(trainer: &mut Trainer, path: &Path) -> Result<(), HarnessError> {
    let nets = load_bundle(path)?;
    let period = trainer.config.target_period;
    let find = |name: &str| -> Result<&Mlp, HarnessError> {
        nets.iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| HarnessError::Config(format!("checkpoint is missing network `{name}`")))
    };
    let install = |target: &mut crate::nn::TrainedNet, net: &Mlp| -> Result<(), HarnessError> {
        if net.input_dim() != target.net.input_dim() || net.output_dim() != target.net.output_dim()
        {
            return Err(HarnessError::Config(format!(
                "checkpoint network shape {}x{} does not match configuration {}x{}",
                net.input_dim(),
                net.output_dim(),
                target.net.input_dim(),
                target.net.output_dim()
            )));
        }
        target.net = net.clone();
        target.target = TargetNetwork::new(&target.net, period);
        Ok(())
    };
    if let Some(central) = &mut trainer.central {
        install(&mut central.mu, find("central_mu")?)?;
        install(&mut central.sigma, find("central_sigma")?)?;
    }
    for p in 0..trainer.agents.len() {
        for i in 0..trainer.agents[p].len() {
            let q = find(&format!("agent_{p}_{i}"))?.clone();
            install(&mut trainer.agents[p][i].q, &q)?;
            if trainer.agents[p][i].avg_policy.is_some() {
                let avg = find(&format!("avg_{p}_{i}"))?.clone();
                install(trainer.agents[p][i].avg_policy.as_mut().unwrap(), &avg)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mean_reward: f64,
    pub nu: f64,
    pub eps_gap: Option<f64>,
}

/// Greedy evaluation of a checkpoint under its configuration.
pub fn run_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<EvalReport, HarnessError> {
    let env = cfg.env.build_env()?;
    let mut trainer = Trainer::new(env, cfg.learner.clone(), cfg.run.seed);
    load_trainer(&mut trainer, checkpoint)?;
    let eps_gap = match cfg.env.gap_problem()? {
        Some(p) => Some(p.epsilon_gap(&to_path_flow(&extract_policy_flow(&mut trainer)?))),
        None => None,
    };
    let nu = trainer.current_nu()?;
    let mean_reward = trainer.evaluate_mean_reward(cfg.run.eval_steps)?;
    Ok(EvalReport {
        mean_reward,
        nu,
        eps_gap,
    })
}

/// Equilibrium certification for the configured routing network.
pub fn run_oracle(
    cfg: &ExperimentConfig,
    tol: f64,
    max_iters: usize,
) -> Result<OracleResult, HarnessError> {
    let problem = cfg.env.routing_problem()?.ok_or_else(|| {
        HarnessError::Config("the oracle applies to routing environments only".into())
    })?;
    Ok(problem.minimize_potential(tol, max_iters))
}

/// Runs the same experiment under several seeds, one subdirectory each.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<TrainArtifacts>, HarnessError> {
    let mut out = Vec::new();
    for &seed in seeds {
        let mut c = cfg.clone();
        c.run.seed = seed;
        out.push(run_train(&c, &out_dir.join(format!("seed-{seed}")))?);
    }
    Ok(out)
}
