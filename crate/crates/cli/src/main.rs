use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seerl::harness::{
    collect_summaries, load_selection, load_training, render_report, run_ablation, run_evaluation, run_experiment,
    run_selection, run_training, summary_text, write_evaluation, write_experiment, write_rows, write_selection,
    write_training, ExperimentConfig, HarnessError, Sweep,
};

#[derive(Parser)]
#[command(name = "seerl", version, about = "Snapshot ensembles from a single cyclic-learning-rate run")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write snapshots, config and training log.
    Train(RunArgs),
    /// Select an ensemble from previously written training output.
    Select(RunArgs),
    /// Evaluate a previously selected ensemble.
    Evaluate(RunArgs),
    /// Train, select and evaluate in one go.
    Run(RunArgs),
    /// Sweep one configuration key and write ablation.csv.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// `key=v1,v2,...`, e.g. `M=3,5,7,9`.
        #[arg(long)]
        sweep: String,
    },
    /// Aggregate every summary in the output directory into report.txt.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this seed only instead of the seeds listed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long = "M")]
    cycles: Option<String>,
    #[arg(long)]
    alpha0: Option<String>,
    #[arg(long = "T")]
    total_steps: Option<String>,
    #[arg(long)]
    episodes: Option<String>,
    /// Any other config key, e.g. `--set beta=1.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
                ExperimentConfig::from_text(&text)?
            }
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("env", &self.env),
            ("mode", &self.mode),
            ("strategy", &self.strategy),
            ("m", &self.m),
            ("M", &self.cycles),
            ("alpha0", &self.alpha0),
            ("T", &self.total_steps),
            ("episodes", &self.episodes),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn train(args: &RunArgs) -> Result<(), HarnessError> {
    let cfg = args.config()?;
    for &seed in &cfg.seeds {
        let run = run_training(&cfg, seed)?;
        write_training(&args.out, &cfg, &run)?;
        println!("{}: {} snapshots, {} environment steps", run.run_id, run.snapshots.len(), run.env_steps);
    }
    Ok(())
}

fn select(args: &RunArgs) -> Result<(), HarnessError> {
    let cfg = args.config()?;
    for &seed in &cfg.seeds {
        let run = load_training(&args.out, &cfg, seed)?;
        let (_, report) = run_selection(&cfg, seed, &run.snapshots, &run.log)?;
        write_selection(&args.out, &run.run_id, &report)?;
        println!("{}: chosen {:?}, converged {}", run.run_id, report.chosen, report.converged);
    }
    Ok(())
}

fn evaluate(args: &RunArgs) -> Result<(), HarnessError> {
    let cfg = args.config()?;
    for &seed in &cfg.seeds {
        let run = load_training(&args.out, &cfg, seed)?;
        let selection = load_selection(&args.out, &run.run_id)?;
        let report = run_evaluation(&cfg, seed, &run.snapshots, &selection, run.env_steps)?;
        write_evaluation(&args.out, &cfg, seed, &report)?;
        print!("{}", summary_text(&cfg, seed, &report));
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), HarnessError> {
    let cfg = args.config()?;
    for &seed in &cfg.seeds {
        let result = run_experiment(&cfg, seed)?;
        write_experiment(&args.out, &result)?;
        println!(
            "{}: ensemble return {:.4}, final policy {:.4}, chosen {:?}",
            result.training.run_id,
            result.evaluation.ensemble.mean(),
            result.evaluation.final_policy_mean(),
            result.evaluation.chosen
        );
    }
    Ok(())
}

fn ablate(args: &RunArgs, sweep: &str) -> Result<(), HarnessError> {
    let sweep: Sweep = sweep.parse()?;
    let cfg = args.config()?;
    let rows = run_ablation(&cfg, &sweep, Some(&args.out));
    let path = args.out.join("ablation.csv");
    fs::create_dir_all(&args.out).map_err(|source| HarnessError::Io { path: args.out.clone(), source })?;
    let file = fs::File::create(&path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
    write_rows(&rows, file)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("{} rows written to {} ({failed} failed)", rows.len(), path.display());
    Ok(())
}

fn report(out: &Path) -> Result<(), HarnessError> {
    let runs = collect_summaries(out)?;
    if runs.is_empty() {
        return Err(HarnessError::Config(format!("no summaries found in {}", out.display())));
    }
    let text = render_report(&runs);
    let path = out.join("report.txt");
    fs::write(&path, &text).map_err(|source| HarnessError::Io { path, source })?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Select(a) => select(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Run(a) => run(a),
        Command::Ablate { run, sweep } => ablate(run, sweep),
        Command::Report { out } => report(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
