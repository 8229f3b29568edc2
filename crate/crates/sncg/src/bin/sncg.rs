//! Command-line front end: train, evaluate, certify equilibria and sweep
//! seeds for the congestion-game laboratory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sncg::harness::{
    run_eval, run_oracle, run_sweep, run_train, ExperimentConfig, HarnessError,
};

#[derive(Parser)]
#[command(name = "sncg", version, about = "Multi-agent congestion-game laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learner and write metrics, checkpoint and summary.
    Train {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for run artifacts.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's training budget (environment steps).
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Evaluate a checkpoint greedily under its configuration.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Override the evaluation length (environment steps).
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Solve the configured routing game to equilibrium and print it.
    Oracle {
        /// Experiment config; defaults to the packet benchmark when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Equilibrium-gap tolerance.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 20_000)]
        max_iters: usize,
    },
    /// Train the same experiment under several seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Train {
            config,
            out,
            seed,
            budget,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seed) = seed {
                cfg.run.seed = seed;
            }
            if let Some(budget) = budget {
                cfg.run.budget = budget;
            }
            let artifacts = run_train(&cfg, &out)?;
            let s = &artifacts.summary;
            println!(
                "trained `{}` ({}) for {} steps, seed {}",
                s.name, s.learner, s.steps, s.seed
            );
            println!("mean_reward = {}", s.mean_reward);
            println!("nu = {}", s.nu);
            if let Some(gap) = s.eps_gap {
                println!("eps_gap = {gap}");
            }
            if let Some(flows) = &s.policy_flows {
                for (p, flow) in flows.iter().enumerate() {
                    let parts: Vec<String> = flow.iter().map(|f| format!("{f:.3}")).collect();
                    println!("population {p} policy flow: [{}]", parts.join(", "));
                }
            }
            println!("artifacts in {}", artifacts.out_dir.display());
            Ok(())
        }
        Command::Eval {
            config,
            checkpoint,
            steps,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(steps) = steps {
                cfg.run.eval_steps = steps;
            }
            let report = run_eval(&cfg, &checkpoint)?;
            println!("mean_reward = {}", report.mean_reward);
            println!("nu = {}", report.nu);
            if let Some(gap) = report.eps_gap {
                println!("eps_gap = {gap}");
            }
            Ok(())
        }
        Command::Oracle {
            config,
            tol,
            max_iters,
        } => {
            let cfg = match config {
                Some(path) => ExperimentConfig::from_path(&path)?,
                None => ExperimentConfig::from_toml_str("[env]\nkind = \"packet\"\n")?,
            };
            let result = run_oracle(&cfg, tol, max_iters)?;
            println!(
                "converged = {} (gap {} after {} iterations)",
                result.converged, result.epsilon_gap, result.iterations
            );
            println!("potential = {}", result.potential);
            for (p, (flow, costs)) in result
                .flows
                .flows
                .iter()
                .zip(&result.path_costs)
                .enumerate()
            {
                for (i, (f, c)) in flow.iter().zip(costs).enumerate() {
                    println!("population {p} path {i}: flow = {f:.4}, cost = {c:.4}");
                }
            }
            Ok(())
        }
        Command::Sweep { config, out, seeds } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let artifacts = run_sweep(&cfg, &seeds, &out)?;
            for a in &artifacts {
                let s = &a.summary;
                match s.eps_gap {
                    Some(gap) => println!(
                        "seed {}: mean_reward = {}, nu = {}, eps_gap = {gap}",
                        s.seed, s.mean_reward, s.nu
                    ),
                    None => println!(
                        "seed {}: mean_reward = {}, nu = {}",
                        s.seed, s.mean_reward, s.nu
                    ),
                }
            }
            Ok(())
        }
    }
}
