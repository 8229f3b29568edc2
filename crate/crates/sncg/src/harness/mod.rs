//! Experiment harness: TOML configuration, training orchestration with
//! on-disk artifacts, metrics CSVs and checkpoints.

mod config;
mod metrics;
mod run;

pub use config::{parse_network_toml, EnvConfig, ExperimentConfig, RunConfig};
pub use metrics::{metrics_csv_string, write_metrics_csv, METRICS_HEADER};
pub use run::{
    extract_policy_flow, load_trainer, run_eval, run_oracle, run_sweep, run_train, save_trainer,
    EvalReport, RunSummary, TrainArtifacts,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Trainer(#[from] crate::learners::TrainerError),
    #[error(transparent)]
    Checkpoint(#[from] crate::nn::CheckpointError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}
