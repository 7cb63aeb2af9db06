//! Aggregation of the `*.summary.txt` files found in an output directory.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::HarnessError;

/// The numeric and identifying fields of one evaluation summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub env: String,
    pub mode: String,
    pub strategy: String,
    pub mean_return: f64,
    pub final_policy_return: f64,
    pub mean_pairwise_kl: f64,
    pub training_steps: u64,
}

pub fn parse_summary(text: &str) -> Result<RunSummary, HarnessError> {
    let fields: HashMap<&str, &str> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once(' '))
        .collect();
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| HarnessError::Config(format!("summary is missing `{k}`")))
    };
    let num = |k: &str| -> Result<f64, HarnessError> {
        get(k)?.parse().map_err(|_| HarnessError::Config(format!("bad value for `{k}`")))
    };
    Ok(RunSummary {
        run_id: get("run_id")?.to_string(),
        env: get("env")?.to_string(),
        mode: get("mode")?.to_string(),
        strategy: get("strategy")?.to_string(),
        mean_return: num("mean_return")?,
        final_policy_return: num("final_policy_return")?,
        mean_pairwise_kl: num("mean_pairwise_kl")?,
        training_steps: get("training_steps")?
            .parse()
            .map_err(|_| HarnessError::Config("bad value for `training_steps`".into()))?,
    })
}

/// Reads every summary directly under `dir`, sorted by run id.
pub fn collect_summaries(dir: &Path) -> Result<Vec<RunSummary>, HarnessError> {
    let io = |source| HarnessError::Io { path: dir.to_path_buf(), source };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".summary.txt")) {
            let text = fs::read_to_string(&path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
            out.push(parse_summary(&text)?);
        }
    }
    out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(out)
}

/// Table of per-(env, mode, strategy) means over seeds.
pub fn render_report(runs: &[RunSummary]) -> String {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry((&r.env, &r.mode, &r.strategy)).or_default().push(r);
    }
    let mut out = String::from("env mode strategy runs mean_return final_policy_return mean_pairwise_kl training_steps\n");
    for ((env, mode, strategy), rs) in groups {
        let n = rs.len() as f64;
        let avg = |f: fn(&RunSummary) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
        out += &format!(
            "{env} {mode} {strategy} {} {:.6} {:.6} {:.6} {}\n",
            rs.len(),
            avg(|r| r.mean_return),
            avg(|r| r.final_policy_return),
            avg(|r| r.mean_pairwise_kl),
            rs.iter().map(|r| r.training_steps).sum::<u64>() / rs.len() as u64,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# seerl-evaluation-summary version=1\nrun_id seerl-gridworld-s0\nenv gridworld\nmode seerl\nstrategy majority\nseed 0\ntraining_steps 100\nmean_return 0.5\nfinal_policy_return 0.25\nmean_pairwise_kl 0.125\n";

    #[test]
    fn parse_and_render() {
        let a = parse_summary(SAMPLE).unwrap();
        assert_eq!(a.mean_return, 0.5);
        let mut b = a.clone();
        b.run_id = "seerl-gridworld-s1".into();
        b.mean_return = 1.0;
        let text = render_report(&[a, b]);
        assert!(text.contains("gridworld seerl majority 2 0.750000 0.250000 0.125000 100"), "{text}");
        assert!(parse_summary("run_id x\n").is_err());
    }
}
