//! Train, select and evaluate in one pass, and the files each stage writes.
//!
//! For a run id `R` the output directory holds
//!
//! * `R_cycle{i}.snap`: the `M` snapshots, `i` from 1
//! * `R.config`: the configuration used
//! * `R.log`: the training log
//! * `R.selection.txt`: weights, chosen subset and the KL diversity matrix
//! * `R.eval.csv`: one row per evaluation episode
//! * `R.summary.txt`: the evaluation summary
//! * `R.timing.txt`: wall-clock seconds per stage
//!
//! Everything except the timing file is a pure function of `(config, seed)`.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;

use crate::ensemble::Combiner;
use crate::learner::PolicyParams;
use crate::seeding::derive_seed;
use crate::selection::{select_policies, SelectionProblem, SelectionReport};
use crate::snapshot::{self, snapshot_file_name, PolicySnapshot};
use crate::training_log::TrainingLog;

use super::config::ExperimentConfig;
use super::evaluate::{evaluate, EvalSummary};
use super::train::{run_training, TrainingRun};
use super::HarnessError;

const SELECTION_STREAM: u64 = 11;
const EVAL_STREAM: u64 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub run_id: String,
    /// Positions (0-based) of the snapshots in the ensemble.
    pub chosen: Vec<usize>,
    pub w: Vec<f64>,
    pub diversity: DMatrix<f64>,
    pub ensemble: EvalSummary,
    /// Every snapshot on its own, in cycle order.
    pub standalone: Vec<EvalSummary>,
    /// Environment steps consumed by training.
    pub training_steps: u64,
}

impl EvaluationReport {
    /// Standalone return of the snapshot taken last.
    pub fn final_policy_mean(&self) -> f64 {
        self.standalone.last().map_or(f64::NAN, EvalSummary::mean)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub training: TrainingRun,
    pub selection: SelectionReport,
    pub evaluation: EvaluationReport,
    /// Seconds spent in training, selection and evaluation.
    pub wall_clock: [f64; 3],
}

/// Builds and solves the selection problem. Uses only the log and the
/// snapshots; no environment is touched.
pub fn run_selection(
    cfg: &ExperimentConfig,
    seed: u64,
    snapshots: &[PolicySnapshot],
    log: &TrainingLog,
) -> Result<(SelectionProblem, SelectionReport), HarnessError> {
    let policies: Vec<PolicyParams> = snapshots.iter().map(|s| s.params.clone()).collect();
    let space = cfg.env.make().spec().action_space.clone();
    Ok(select_policies(&policies, log, &space, &cfg.selection(derive_seed(seed, SELECTION_STREAM)))?)
}

/// Evaluates the chosen ensemble and every snapshot alone.
pub fn run_evaluation(
    cfg: &ExperimentConfig,
    seed: u64,
    snapshots: &[PolicySnapshot],
    selection: &SelectionReport,
    training_steps: u64,
) -> Result<EvaluationReport, HarnessError> {
    let space = cfg.env.make().spec().action_space.clone();
    let combiner = Combiner { strategy: cfg.strategy, space, n_bins: cfg.n_bins, bandwidth: cfg.bandwidth };
    let eval_seed = derive_seed(seed, EVAL_STREAM);
    let chosen: Vec<&PolicyParams> = selection
        .chosen
        .iter()
        .map(|&i| snapshots.get(i).map(|s| &s.params))
        .collect::<Option<_>>()
        .ok_or_else(|| HarnessError::Config("selection refers to a missing snapshot".into()))?;
    let ensemble = evaluate(cfg.env, &chosen, &combiner, cfg.episodes, eval_seed)?;
    let standalone = snapshots
        .iter()
        .map(|s| evaluate(cfg.env, &[&s.params], &combiner, cfg.episodes, eval_seed))
        .collect::<Result<_, _>>()?;
    Ok(EvaluationReport {
        run_id: cfg.run_id(seed),
        chosen: selection.chosen.clone(),
        w: selection.w.clone(),
        diversity: selection.diversity.clone(),
        ensemble,
        standalone,
        training_steps,
    })
}

/// Full pipeline for one seed.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentResult, HarnessError> {
    let clock = Instant::now();
    let training = run_training(cfg, seed)?;
    let t_train = clock.elapsed().as_secs_f64();
    let (_, selection) = run_selection(cfg, seed, &training.snapshots, &training.log)?;
    let t_select = clock.elapsed().as_secs_f64() - t_train;
    let evaluation = run_evaluation(cfg, seed, &training.snapshots, &selection, training.env_steps)?;
    let t_eval = clock.elapsed().as_secs_f64() - t_train - t_select;
    Ok(ExperimentResult {
        config: cfg.clone(),
        seed,
        training,
        selection,
        evaluation,
        wall_clock: [t_train, t_select, t_eval],
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, HarnessError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn path_for(out: &Path, run_id: &str, suffix: &str) -> PathBuf {
    out.join(format!("{run_id}{suffix}"))
}

pub fn write_training(out: &Path, cfg: &ExperimentConfig, run: &TrainingRun) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    for s in &run.snapshots {
        snapshot::save(s, &out.join(s.file_name()))?;
    }
    write_text(&path_for(out, &run.run_id, ".config"), &cfg.to_text())?;
    let path = path_for(out, &run.run_id, ".log");
    let mut w = create(&path)?;
    run.log.write_to(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
}

/// Reads back what [`write_training`] wrote for `(cfg, seed)`.
pub fn load_training(out: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<TrainingRun, HarnessError> {
    let run_id = cfg.run_id(seed);
    let snapshots = (1..=cfg.cycles)
        .map(|i| snapshot::load(&out.join(snapshot_file_name(&run_id, i))))
        .collect::<Result<Vec<_>, _>>()?;
    let path = path_for(out, &run_id, ".log");
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let log = TrainingLog::read_from(BufReader::new(file))?;
    let env_steps = log.len() as u64;
    Ok(TrainingRun { run_id, snapshots, log, env_steps })
}

pub fn write_selection(out: &Path, run_id: &str, report: &SelectionReport) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = path_for(out, run_id, ".selection.txt");
    let mut w = create(&path)?;
    report.write_to(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
}

pub fn load_selection(out: &Path, run_id: &str) -> Result<SelectionReport, HarnessError> {
    let path = path_for(out, run_id, ".selection.txt");
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    Ok(SelectionReport::read_from(BufReader::new(file))?)
}

fn join(xs: impl IntoIterator<Item = impl ToString>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Structured-text summary. Values use the shortest round-trip float form.
pub fn summary_text(cfg: &ExperimentConfig, seed: u64, report: &EvaluationReport) -> String {
    let policy_means: Vec<f64> = report.standalone.iter().map(EvalSummary::mean).collect();
    let lines = [
        "# seerl-evaluation-summary version=1".to_string(),
        format!("run_id {}", report.run_id),
        format!("env {}", cfg.env),
        format!("mode {}", cfg.mode),
        format!("strategy {}", cfg.strategy),
        format!("seed {seed}"),
        format!("T {}", cfg.total_steps),
        format!("M {}", cfg.cycles),
        format!("m {}", cfg.m),
        format!("alpha0 {}", cfg.alpha0),
        format!("training_steps {}", report.training_steps),
        format!("episodes {}", report.ensemble.episodes.len()),
        format!("chosen {}", join(&report.chosen)),
        format!("w {}", join(&report.w)),
        format!("mean_return {}", report.ensemble.mean()),
        format!("std_return {}", report.ensemble.std()),
        format!("mean_discounted_return {}", report.ensemble.mean_discounted()),
        format!("policy_mean_returns {}", join(policy_means)),
        format!("final_policy_return {}", report.final_policy_mean()),
        format!("mean_pairwise_kl {}", crate::selection::mean_off_diagonal(&report.diversity)),
    ];
    lines.join("\n") + "\n"
}

pub fn write_evaluation(
    out: &Path,
    cfg: &ExperimentConfig,
    seed: u64,
    report: &EvaluationReport,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = path_for(out, &report.run_id, ".eval.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::Csv(e.to_string()))?;
    let csv_err = |e: csv::Error| HarnessError::Csv(e.to_string());
    w.write_record(["episode", "return", "discounted_return", "steps"]).map_err(csv_err)?;
    for (i, e) in report.ensemble.episodes.iter().enumerate() {
        w.write_record([i.to_string(), e.undiscounted.to_string(), e.discounted.to_string(), e.steps.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    write_text(&path_for(out, &report.run_id, ".summary.txt"), &summary_text(cfg, seed, report))
}

/// Writes every artefact of a finished experiment.
pub fn write_experiment(out: &Path, result: &ExperimentResult) -> Result<(), HarnessError> {
    let run_id = &result.training.run_id;
    write_training(out, &result.config, &result.training)?;
    write_selection(out, run_id, &result.selection)?;
    write_evaluation(out, &result.config, result.seed, &result.evaluation)?;
    let [a, b, c] = result.wall_clock;
    write_text(&path_for(out, run_id, ".timing.txt"), &format!("train_seconds {a}\nselect_seconds {b}\neval_seconds {c}\n"))
}
