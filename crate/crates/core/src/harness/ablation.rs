//! Sweeps of one configuration key, every point run for every seed.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::selection::mean_off_diagonal;

use super::config::ExperimentConfig;
use super::pipeline::{run_experiment, write_experiment};
use super::HarnessError;

/// `key=v1,v2,...`, e.g. `M=3,5,7,9` or `mode=seerl,b1-independent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for Sweep {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, values) = s
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("sweep `{s}` is not key=v1,v2,...")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(HarnessError::Config(format!("sweep `{s}` has no values")));
        }
        // reject unknown keys before anything runs
        ExperimentConfig::default().set(key.trim(), &values[0]).or_else(|e| match e {
            HarnessError::Config(ref msg) if msg.starts_with("unknown key") => Err(e),
            _ => Ok(()),
        })?;
        Ok(Sweep { key: key.trim().to_string(), values })
    }
}

/// One row of the aggregate table. Failed runs keep their row with
/// `status = "error"` and NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub key: String,
    pub value: String,
    pub seed: u64,
    pub mode: String,
    pub env: String,
    pub cycles: u64,
    pub m: usize,
    pub alpha0: f64,
    pub lr_at_first_step: f64,
    pub status: String,
    pub mean_return: f64,
    pub std_return: f64,
    pub final_policy_return: f64,
    pub mean_pairwise_kl: f64,
    pub training_steps: u64,
    pub chosen: String,
    pub error: String,
}

fn point_config(base: &ExperimentConfig, key: &str, value: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = base.clone();
    cfg.set(key, value)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the pipeline for every sweep value and every seed of `base`.
/// Rows come back in (value, seed) order regardless of scheduling. When
/// `out` is given, each point's artefacts go to `out/<key>=<value>/`.
pub fn run_ablation(base: &ExperimentConfig, sweep: &Sweep, out: Option<&Path>) -> Vec<AblationRow> {
    let jobs: Vec<(&String, u64)> = sweep.values.iter().flat_map(|v| base.seeds.iter().map(move |&s| (v, s))).collect();
    jobs.par_iter()
        .map(|&(value, seed)| {
            let mut row = AblationRow {
                key: sweep.key.clone(),
                value: value.clone(),
                seed,
                mode: base.mode.to_string(),
                env: base.env.to_string(),
                cycles: base.cycles,
                m: base.m,
                alpha0: base.alpha0,
                lr_at_first_step: f64::NAN,
                status: "error".into(),
                mean_return: f64::NAN,
                std_return: f64::NAN,
                final_policy_return: f64::NAN,
                mean_pairwise_kl: f64::NAN,
                training_steps: 0,
                chosen: String::new(),
                error: String::new(),
            };
            let outcome = point_config(base, &sweep.key, value).and_then(|cfg| {
                row.mode = cfg.mode.to_string();
                row.env = cfg.env.to_string();
                row.cycles = cfg.cycles;
                row.m = cfg.m;
                row.alpha0 = cfg.alpha0;
                row.lr_at_first_step = cfg.schedule()?.lr_at(1)?;
                let result = run_experiment(&cfg, seed)?;
                if let Some(dir) = out {
                    write_experiment(&dir.join(format!("{}={}", sweep.key, value)), &result)?;
                }
                Ok(result)
            });
            match outcome {
                Ok(r) => {
                    let e = &r.evaluation;
                    row.status = "ok".into();
                    row.mean_return = e.ensemble.mean();
                    row.std_return = e.ensemble.std();
                    row.final_policy_return = e.final_policy_mean();
                    row.mean_pairwise_kl = mean_off_diagonal(&e.diversity);
                    row.training_steps = e.training_steps;
                    row.chosen = e.chosen.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
                }
                Err(e) => row.error = e.to_string(),
            }
            row
        })
        .collect()
}

pub fn write_rows<W: std::io::Write>(rows: &[AblationRow], w: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        let s: Sweep = "M=3,5,7,9".parse().unwrap();
        assert_eq!(s.key, "M");
        assert_eq!(s.values, vec!["3", "5", "7", "9"]);
        assert!("M".parse::<Sweep>().is_err());
        assert!("M=".parse::<Sweep>().is_err());
        assert!("nonsense=1".parse::<Sweep>().is_err());
    }

    #[test]
    fn cartesian_rows_and_failures() {
        let base = ExperimentConfig {
            total_steps: 200,
            cycles: 3,
            m: 2,
            episodes: 2,
            seeds: vec![0, 1],
            ..Default::default()
        };
        let sweep: Sweep = "M=1,3".parse().unwrap();
        let rows = run_ablation(&base, &sweep, None);
        assert_eq!(rows.len(), 4);
        // m = 2 > M = 1 fails but keeps its row
        assert_eq!(rows[0].status, "error");
        assert!(!rows[0].error.is_empty());
        assert_eq!(rows[2].status, "ok");
        assert_eq!((rows[2].value.as_str(), rows[2].seed, rows[3].seed), ("3", 0, 1));
        assert_eq!(rows[2].training_steps, 200);

        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("key,value,seed,mode"));
    }

    #[test]
    fn alpha_sweep_sets_first_rate() {
        let base = ExperimentConfig { total_steps: 100, cycles: 2, m: 1, episodes: 1, ..Default::default() };
        let sweep: Sweep = "alpha0=0.01,0.005,0.001".parse().unwrap();
        let rows = run_ablation(&base, &sweep, None);
        let lrs: Vec<f64> = rows.iter().map(|r| r.lr_at_first_step).collect();
        assert_eq!(lrs, vec![0.01, 0.005, 0.001]);
    }
}
