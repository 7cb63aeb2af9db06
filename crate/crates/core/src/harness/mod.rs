//! Experiment driver: training in every mode, offline selection, ensemble
//! evaluation, sweeps and report aggregation.

mod ablation;
mod config;
mod evaluate;
mod pipeline;
mod report;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::ensemble::EnsembleError;
use crate::env::EnvError;
use crate::learner::LearnerError;
use crate::schedule::ScheduleError;
use crate::selection::SelectionError;
use crate::snapshot::SnapshotError;
use crate::training_log::LogError;

pub use ablation::{run_ablation, write_rows, AblationRow, Sweep};
pub use config::{ExperimentConfig, Mode};
pub use evaluate::{evaluate, EpisodeReturn, EvalSummary};
pub use pipeline::{
    load_selection, load_training, path_for, run_evaluation, run_experiment, run_selection, summary_text,
    write_evaluation, write_experiment, write_selection, write_training, EvaluationReport, ExperimentResult,
};
pub use report::{collect_summaries, parse_summary, render_report, RunSummary};
pub use train::{run_training, tail_snapshot_steps, TrainingRun};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("environment error at step {step}: {source}")]
    Env { step: u64, source: EnvError },
    #[error("learner error at step {step}: {source}")]
    Learner { step: u64, source: LearnerError },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("csv output failed: {0}")]
    Csv(String),
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// Short stable name for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "Config",
            HarnessError::Env { .. } => "Env",
            HarnessError::Learner { .. } => "Learner",
            HarnessError::Schedule(_) => "Schedule",
            HarnessError::Ensemble(EnsembleError::StrategySpaceMismatch { .. })
            | HarnessError::Selection(SelectionError::Ensemble(EnsembleError::StrategySpaceMismatch { .. })) => {
                "StrategySpaceMismatch"
            }
            HarnessError::Selection(_) => "Selection",
            HarnessError::Ensemble(_) => "Ensemble",
            HarnessError::Snapshot(_) => "Snapshot",
            HarnessError::Log(_) => "Log",
            HarnessError::Csv(_) => "Csv",
            HarnessError::Io { .. } => "Io",
        }
    }
}
