//! Experiment configuration, read from flat `key = value` text.
//!
//! ```text
//! # lines starting with '#' are comments
//! env = gridworld
//! mode = seerl
//! T = 200000
//! M = 5
//! m = 3
//! seeds = 0,1,2
//! ```
//!
//! Unknown keys are rejected. Every key is optional; see
//! [`ExperimentConfig::default`] for the values used when a key is absent.

use std::fmt;
use std::str::FromStr;

use crate::ensemble::{Strategy, DEFAULT_BANDWIDTH, DEFAULT_BINS};
use crate::env::EnvId;
use crate::learner::{DEFAULT_C_V, DEFAULT_ENTROPY_COEF, DEFAULT_HIDDEN};
use crate::schedule::ScheduleSpec;
use crate::selection::{
    ErrorThreshold, SelectionConfig, StateBinning, DEFAULT_BETA, DEFAULT_EPSILON, DEFAULT_GRID_CELLS,
    DEFAULT_RIDGE, DEFAULT_SAMPLES,
};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// One run, cyclic cosine schedule, a snapshot at the end of each cycle.
    Seerl,
    /// `M` independent runs of `T` steps each, one annealing cycle per run.
    Independent,
    /// One run at a constant learning rate with random gradient steps
    /// injected at the interior cycle boundaries.
    RandomPerturb,
    /// One run with a single annealing cycle; `M` snapshots in the last
    /// tenth of training.
    ConstantLr,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Seerl, Mode::Independent, Mode::RandomPerturb, Mode::ConstantLr];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Seerl => "seerl",
            Mode::Independent => "b1-independent",
            Mode::RandomPerturb => "b3-random-perturb",
            Mode::ConstantLr => "constant-lr",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub mode: Mode,
    pub total_steps: u64,
    pub cycles: u64,
    pub m: usize,
    pub alpha0: f64,
    /// Constant rate used by [`Mode::RandomPerturb`]; `None` means `alpha0 / 2`.
    pub base_lr: Option<f64>,
    pub sigma: f64,
    pub hidden: usize,
    pub c_v: f64,
    pub entropy_coef: f64,
    pub batch_size: usize,
    pub beta: f64,
    pub t_err: ErrorThreshold,
    pub epsilon: f64,
    pub samples: usize,
    pub ridge: f64,
    pub grid_cells: usize,
    pub strategy: Strategy,
    pub n_bins: usize,
    pub bandwidth: f64,
    pub episodes: usize,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvId::GridWorld,
            mode: Mode::Seerl,
            total_steps: 200_000,
            cycles: 5,
            m: 3,
            alpha0: 0.05,
            base_lr: None,
            sigma: 1.0,
            hidden: DEFAULT_HIDDEN,
            c_v: DEFAULT_C_V,
            entropy_coef: DEFAULT_ENTROPY_COEF,
            batch_size: 16,
            beta: DEFAULT_BETA,
            t_err: ErrorThreshold::Median,
            epsilon: DEFAULT_EPSILON,
            samples: DEFAULT_SAMPLES,
            ridge: DEFAULT_RIDGE,
            grid_cells: DEFAULT_GRID_CELLS,
            strategy: Strategy::Majority,
            n_bins: DEFAULT_BINS,
            bandwidth: DEFAULT_BANDWIDTH,
            episodes: 100,
            seeds: vec![0],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("cannot parse `{value}` for key `{key}`")))
}

impl ExperimentConfig {
    pub fn base_lr(&self) -> f64 {
        self.base_lr.unwrap_or(self.alpha0 / 2.0)
    }

    pub fn schedule(&self) -> Result<ScheduleSpec, HarnessError> {
        Ok(ScheduleSpec::new(self.alpha0, self.total_steps, self.cycles)?)
    }

    pub fn selection(&self, seed: u64) -> SelectionConfig {
        SelectionConfig {
            beta: self.beta,
            threshold: self.t_err,
            epsilon: self.epsilon,
            m: self.m,
            samples: self.samples,
            ridge: self.ridge,
            strategy: self.strategy,
            n_bins: self.n_bins,
            bandwidth: self.bandwidth,
            binning: if self.env.has_discrete_states() {
                StateBinning::Exact
            } else {
                StateBinning::Grid { cells: self.grid_cells }
            },
            seed,
        }
    }

    pub fn run_id(&self, seed: u64) -> String {
        format!("{}-{}-s{}", self.mode, self.env, seed)
    }

    /// Sets one key. Shared by the config-file reader and CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let value = value.trim();
        match key {
            "env" => self.env = value.parse().map_err(|e: crate::env::EnvError| HarnessError::Config(e.to_string()))?,
            "mode" => self.mode = value.parse()?,
            "T" => self.total_steps = parse(key, value)?,
            "M" => self.cycles = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "alpha0" => self.alpha0 = parse(key, value)?,
            "base_lr" => self.base_lr = Some(parse(key, value)?),
            "sigma" => self.sigma = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "c_v" => self.c_v = parse(key, value)?,
            "entropy_coef" => self.entropy_coef = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "t_err" => {
                self.t_err = if value == "median" {
                    ErrorThreshold::Median
                } else {
                    ErrorThreshold::Absolute(parse(key, value)?)
                }
            }
            "epsilon" => self.epsilon = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "ridge" => self.ridge = parse(key, value)?,
            "grid_cells" => self.grid_cells = parse(key, value)?,
            "strategy" => {
                self.strategy = value.parse().map_err(|e: crate::ensemble::EnsembleError| HarnessError::Config(e.to_string()))?
            }
            "n_bins" => self.n_bins = parse(key, value)?,
            "bandwidth" => self.bandwidth = parse(key, value)?,
            "episodes" => self.episodes = parse(key, value)?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(HarnessError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults and validates the result.
    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; `from_text(to_text())` gives back an equal config.
    pub fn to_text(&self) -> String {
        let t_err = match self.t_err {
            ErrorThreshold::Median => "median".to_string(),
            ErrorThreshold::Absolute(x) => x.to_string(),
        };
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut lines = vec![
            format!("env = {}", self.env),
            format!("mode = {}", self.mode),
            format!("T = {}", self.total_steps),
            format!("M = {}", self.cycles),
            format!("m = {}", self.m),
            format!("alpha0 = {}", self.alpha0),
        ];
        if let Some(lr) = self.base_lr {
            lines.push(format!("base_lr = {lr}"));
        }
        lines.extend([
            format!("sigma = {}", self.sigma),
            format!("hidden = {}", self.hidden),
            format!("c_v = {}", self.c_v),
            format!("entropy_coef = {}", self.entropy_coef),
            format!("batch_size = {}", self.batch_size),
            format!("beta = {}", self.beta),
            format!("t_err = {t_err}"),
            format!("epsilon = {}", self.epsilon),
            format!("samples = {}", self.samples),
            format!("ridge = {}", self.ridge),
            format!("grid_cells = {}", self.grid_cells),
            format!("strategy = {}", self.strategy),
            format!("n_bins = {}", self.n_bins),
            format!("bandwidth = {}", self.bandwidth),
            format!("episodes = {}", self.episodes),
            format!("seeds = {}", seeds.join(",")),
        ]);
        lines.join("\n") + "\n"
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.schedule()?;
        if self.m == 0 || self.m as u64 > self.cycles {
            return bad(format!("need 1 <= m <= M, got m = {}, M = {}", self.m, self.cycles));
        }
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return bad("batch_size and hidden must be positive".into());
        }
        if !(self.base_lr() >= 0.0 && self.base_lr().is_finite()) || !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("base_lr and sigma must be non-negative".into());
        }
        if !(self.c_v.is_finite() && self.entropy_coef.is_finite()) {
            return bad("c_v and entropy_coef must be finite".into());
        }
        if self.n_bins == 0 || !(self.bandwidth > 0.0) {
            return bad("n_bins and bandwidth must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.mode == Mode::ConstantLr && self.total_steps < 10 * self.cycles {
            return bad(format!("constant-lr needs T >= 10 M, got T = {}", self.total_steps));
        }
        let space = self.env.make().spec().action_space.clone();
        crate::ensemble::Combiner::new(self.strategy, space).check(self.m)?;
        self.selection(0).validate(self.cycles as usize).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}
