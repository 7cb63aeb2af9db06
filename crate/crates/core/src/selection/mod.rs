//! Offline choice of `m` out of `M` snapshot policies.
//!
//! Each sampled state contributes a per-policy score
//! `b_i(s) = sum_a L(s,a) - beta/(M-1) * sum_{k != i} KL(pi_i(s) || pi_k(s))`,
//! where `L(s,a)` flags logged actions with a large training loss that agree
//! with the ensemble action. The scores are folded into
//! `B_ij = sum_s P(s) b_i(s) b_j(s)` and `w^T B w` is minimised over the
//! simplex. The `m` policies with the largest `w_i` form the ensemble.

mod kl;
mod qp;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::env::{Action, ActionSpace};
use crate::ensemble::{Combiner, EnsembleError, Strategy, DEFAULT_BANDWIDTH, DEFAULT_BINS};
use crate::learner::{policy_distribution, ActionDist, LearnerError, PolicyParams};
use crate::seeding::{derive_seed, rng_for};
use crate::training_log::TrainingLog;

pub use kl::kl_between;
pub use qp::{
    check_symmetric, project_onto_simplex, solve_simplex_qp, QpError, QpSolution, DEFAULT_RIDGE,
    MAX_ITERATIONS,
};

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_SAMPLES: usize = 2048;
pub const DEFAULT_GRID_CELLS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("KL divergence is infinite: action {action} has zero probability under the second policy")]
    ZeroSupportMismatch { action: usize },
    #[error("distributions are over different action spaces")]
    SpaceMismatch,
    #[error("training log is empty")]
    EmptyLog,
    #[error("no candidate policies")]
    NoPolicies,
    #[error("log record refers to cycle {cycle}, outside 1..={policies}")]
    CycleOutOfRange { cycle: u32, policies: usize },
    #[error("invalid selection parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("malformed selection report: {0}")]
    BadReport(String),
}

/// `1` when the loss is at or above `t_err` and the logged action matches
/// the ensemble action, `0` otherwise.
///
/// Continuous actions match when every coordinate differs by less than
/// `epsilon`. Actions of different kinds never match.
pub fn weighted_error(abs_error: f64, policy_action: &Action, ensemble_action: &Action, t_err: f64, epsilon: f64) -> u8 {
    if !(abs_error >= t_err) {
        return 0;
    }
    let matches = match (policy_action, ensemble_action) {
        (Action::Discrete(a), Action::Discrete(e)) => a == e,
        (Action::Continuous(a), Action::Continuous(e)) if a.len() == e.len() => {
            a.iter().zip(e).all(|(x, y)| (x - y).abs() < epsilon)
        }
        _ => false,
    };
    matches as u8
}

/// Score of policy `i` at one state given every policy's action
/// distribution there and the summed error indicators of policy `i`.
/// With a single policy there is no diversity term.
pub fn b_value(i: usize, dists: &[ActionDist], beta: f64, error_sum: f64) -> Result<f64, SelectionError> {
    let m = dists.len();
    if i >= m {
        return Err(SelectionError::InvalidParameter(format!("policy {i} of {m}")));
    }
    if m == 1 {
        return Ok(error_sum);
    }
    let mut kl = 0.0;
    for (k, d) in dists.iter().enumerate() {
        if k != i {
            kl += kl_between(&dists[i], d)?;
        }
    }
    Ok(error_sum - beta / (m - 1) as f64 * kl)
}

/// `B_ij = sum_s weights[s] * b[s][i] * b[s][j]`. The upper triangle is
/// accumulated and mirrored so the result is exactly symmetric.
pub fn build_b_matrix(weights: &[f64], b: &[Vec<f64>]) -> DMatrix<f64> {
    assert_eq!(weights.len(), b.len(), "one weight per state");
    let m = b.first().map_or(0, Vec::len);
    let mut out = DMatrix::zeros(m, m);
    for (p, row) in weights.iter().zip(b) {
        assert_eq!(row.len(), m);
        for i in 0..m {
            let pi = p * row[i];
            for j in i..m {
                out[(i, j)] += pi * row[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    out
}

/// Indices of the `m` largest weights, returned in ascending index order.
/// Equal weights prefer the lower index.
pub fn select_top_m(w: &[f64], m: usize) -> Vec<usize> {
    assert!(m >= 1 && m <= w.len(), "need 1 <= m <= {}", w.len());
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut chosen = order[..m].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Weighted mean pairwise KL: entry `(i, k)` is `sum_s weights[s] * KL(pi_i(s) || pi_k(s))`.
pub fn diversity_matrix(
    policies: &[PolicyParams],
    states: &[Vec<f64>],
    weights: &[f64],
) -> Result<DMatrix<f64>, SelectionError> {
    assert_eq!(states.len(), weights.len());
    let m = policies.len();
    let mut out = DMatrix::zeros(m, m);
    for (s, p) in states.iter().zip(weights) {
        let dists = policies
            .iter()
            .map(|pol| policy_distribution(pol, s))
            .collect::<Result<Vec<_>, _>>()?;
        accumulate_kl(&mut out, &dists, *p)?;
    }
    Ok(out)
}

fn accumulate_kl(out: &mut DMatrix<f64>, dists: &[ActionDist], weight: f64) -> Result<(), SelectionError> {
    for i in 0..dists.len() {
        for k in 0..dists.len() {
            if i != k {
                out[(i, k)] += weight * kl_between(&dists[i], &dists[k])?;
            }
        }
    }
    Ok(())
}

/// Mean of the off-diagonal entries of a square matrix (0 for 1x1).
pub fn mean_off_diagonal(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = (0..n).flat_map(|i| (0..n).map(move |k| (i, k))).filter(|(i, k)| i != k).map(|ik| m[ik]).sum();
    total / (n * (n - 1)) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorThreshold {
    /// Median of `|L'|` over the whole log.
    Median,
    Absolute(f64),
}

/// How logged states are grouped into the states the QP sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateBinning {
    /// Every distinct logged state is its own bin.
    Exact,
    /// Axis-aligned grid over the logged bounding box with `cells` cells
    /// (a power of two; each halving goes to the next dimension in turn).
    Grid { cells: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub beta: f64,
    pub threshold: ErrorThreshold,
    pub epsilon: f64,
    pub m: usize,
    pub samples: usize,
    pub ridge: f64,
    pub strategy: Strategy,
    pub n_bins: usize,
    pub bandwidth: f64,
    pub binning: StateBinning,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            beta: DEFAULT_BETA,
            threshold: ErrorThreshold::Median,
            epsilon: DEFAULT_EPSILON,
            m: 3,
            samples: DEFAULT_SAMPLES,
            ridge: DEFAULT_RIDGE,
            strategy: Strategy::Majority,
            n_bins: DEFAULT_BINS,
            bandwidth: DEFAULT_BANDWIDTH,
            binning: StateBinning::Exact,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self, policies: usize) -> Result<(), SelectionError> {
        let bad = |msg: String| Err(SelectionError::InvalidParameter(msg));
        if !(1.0..2.0).contains(&self.beta) {
            return bad(format!("beta {} outside [1, 2)", self.beta));
        }
        if let ErrorThreshold::Absolute(t) = self.threshold {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("t_err {t} must be positive"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if self.m == 0 || self.m > policies {
            return bad(format!("m = {} with {} policies", self.m, policies));
        }
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge {}", self.ridge));
        }
        if let StateBinning::Grid { cells } = self.binning {
            if !cells.is_power_of_two() {
                return bad(format!("grid cells {cells} is not a power of two"));
            }
        }
        Ok(())
    }
}

/// Everything the QP needs, built from the snapshots and the training log.
#[derive(Debug, Clone)]
pub struct SelectionProblem {
    pub beta: f64,
    pub t_err: f64,
    pub epsilon: f64,
    /// One representative state per bin hit by the sample.
    pub states: Vec<Vec<f64>>,
    /// Visitation frequency of each bin, normalised over the sampled bins.
    pub weights: Vec<f64>,
    /// `b[s][i]`.
    pub b: Vec<Vec<f64>>,
    pub matrix: DMatrix<f64>,
    /// Pairwise weighted KL, computed alongside the b-values.
    pub diversity: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub policies: usize,
    pub states: usize,
    pub t_err: f64,
    pub w: Vec<f64>,
    pub chosen: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diversity: DMatrix<f64>,
}

/// Median of `|L'|` over all records. Falls back to the smallest positive
/// value, then to `f64::MIN_POSITIVE`, so the threshold stays positive.
pub fn median_error(log: &TrainingLog) -> f64 {
    let mut v: Vec<f64> = log.records().iter().map(|r| r.abs_error).collect();
    if v.is_empty() {
        return f64::MIN_POSITIVE;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let med = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    if med > 0.0 {
        med
    } else {
        v.into_iter().find(|&x| x > 0.0).unwrap_or(f64::MIN_POSITIVE)
    }
}

struct Grid {
    low: Vec<f64>,
    width: Vec<f64>,
    divisions: Vec<u64>,
}

impl Grid {
    fn fit(log: &TrainingLog, cells: usize) -> Self {
        let d = log.state_dim();
        let mut low = vec![f64::INFINITY; d];
        let mut high = vec![f64::NEG_INFINITY; d];
        for id in 0..log.distinct_states() {
            for (k, x) in log.state(id as u32).iter().enumerate() {
                low[k] = low[k].min(*x);
                high[k] = high[k].max(*x);
            }
        }
        let mut divisions = vec![1u64; d];
        for h in 0..cells.trailing_zeros() as usize {
            divisions[h % d] *= 2;
        }
        let width = low.iter().zip(&high).map(|(l, h)| h - l).collect();
        Grid { low, width, divisions }
    }

    fn key(&self, state: &[f64]) -> u64 {
        let mut key = 0u64;
        for (k, x) in state.iter().enumerate() {
            let n = self.divisions[k];
            let cell = if self.width[k] > 0.0 {
                (((x - self.low[k]) / self.width[k]) * n as f64).floor().clamp(0.0, (n - 1) as f64) as u64
            } else {
                0
            };
            key = key * n + cell;
        }
        key
    }
}

/// Logged actions at one bin for one policy, grouped by action.
#[derive(Default)]
struct ActionGroup {
    error_sum: f64,
    action_sum: Vec<f64>,
    count: usize,
}

impl SelectionProblem {
    /// Samples states from the log, computes the b-values for every sampled
    /// bin and assembles `B`.
    pub fn build(
        policies: &[PolicyParams],
        log: &TrainingLog,
        space: &ActionSpace,
        cfg: &SelectionConfig,
    ) -> Result<Self, SelectionError> {
        let m = policies.len();
        if m == 0 {
            return Err(SelectionError::NoPolicies);
        }
        cfg.validate(m)?;
        if log.is_empty() {
            return Err(SelectionError::EmptyLog);
        }
        let combiner = Combiner { strategy: cfg.strategy, space: space.clone(), n_bins: cfg.n_bins, bandwidth: cfg.bandwidth };
        combiner.check(m)?;
        let t_err = match cfg.threshold {
            ErrorThreshold::Median => median_error(log),
            ErrorThreshold::Absolute(t) => t,
        };

        // bin of every distinct state
        let state_bin: Vec<u64> = match cfg.binning {
            StateBinning::Exact => (0..log.distinct_states() as u64).collect(),
            StateBinning::Grid { cells } => {
                let grid = Grid::fit(log, cells);
                (0..log.distinct_states()).map(|id| grid.key(log.state(id as u32))).collect()
            }
        };

        let records = log.records();
        let mut rng = rng_for(cfg.seed, 0x5e1ec7);
        let mut representative: BTreeMap<u64, u32> = BTreeMap::new();
        for _ in 0..cfg.samples {
            let r = &records[rng.random_range(0..records.len())];
            representative.entry(state_bin[r.state_id as usize]).or_insert(r.state_id);
        }
        let bin_slot: HashMap<u64, usize> = representative.keys().enumerate().map(|(i, k)| (*k, i)).collect();
        let n_bins = bin_slot.len();

        let mut counts = vec![0usize; n_bins];
        let continuous = !space.is_discrete();
        let mut groups: Vec<Vec<BTreeMap<Vec<i64>, ActionGroup>>> =
            (0..n_bins).map(|_| (0..m).map(|_| BTreeMap::new()).collect()).collect();
        for r in records {
            let Some(&slot) = bin_slot.get(&state_bin[r.state_id as usize]) else { continue };
            // cycles are numbered from 1, like snapshot files
            let cycle = r.cycle_index as usize;
            if cycle == 0 || cycle > m {
                return Err(SelectionError::CycleOutOfRange { cycle: r.cycle_index, policies: m });
            }
            let cycle = cycle - 1;
            counts[slot] += 1;
            let (key, coords): (Vec<i64>, Vec<f64>) = match &r.action {
                Action::Discrete(a) => (vec![*a as i64], vec![*a as f64]),
                Action::Continuous(a) => (a.iter().map(|x| (x / cfg.epsilon).floor() as i64).collect(), a.clone()),
            };
            let g = groups[slot][cycle].entry(key).or_default();
            g.error_sum += r.abs_error;
            if g.action_sum.is_empty() {
                g.action_sum = vec![0.0; coords.len()];
            }
            for (s, x) in g.action_sum.iter_mut().zip(&coords) {
                *s += x;
            }
            g.count += 1;
        }
        let total: usize = counts.iter().sum();
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let states: Vec<Vec<f64>> = representative.values().map(|&id| log.state(id).to_vec()).collect();

        let per_bin: Vec<(Vec<f64>, DMatrix<f64>)> = (0..n_bins)
            .into_par_iter()
            .map(|slot| -> Result<_, SelectionError> {
                let state = &states[slot];
                let dists = policies
                    .iter()
                    .map(|p| policy_distribution(p, state))
                    .collect::<Result<Vec<_>, _>>()?;
                let greedy: Vec<Action> = dists.iter().map(ActionDist::greedy).collect();
                let mut bin_rng = rng_for(derive_seed(cfg.seed, 0xae), slot as u64);
                let ensemble_action = combiner.combine(&greedy, &mut bin_rng)?;
                let mut row = Vec::with_capacity(m);
                for i in 0..m {
                    let errors: f64 = groups[slot][i]
                        .values()
                        .map(|g| {
                            let n = g.count as f64;
                            let action = if continuous {
                                Action::Continuous(g.action_sum.iter().map(|s| s / n).collect())
                            } else {
                                Action::Discrete(g.action_sum[0] as usize)
                            };
                            weighted_error(g.error_sum / n, &action, &ensemble_action, t_err, cfg.epsilon) as f64
                        })
                        .sum();
                    row.push(b_value(i, &dists, cfg.beta, errors)?);
                }
                let mut kl = DMatrix::zeros(m, m);
                accumulate_kl(&mut kl, &dists, weights[slot])?;
                Ok((row, kl))
            })
            .collect::<Result<_, _>>()?;

        let mut b = Vec::with_capacity(n_bins);
        let mut diversity = DMatrix::zeros(m, m);
        for (row, kl) in per_bin {
            b.push(row);
            diversity += kl;
        }
        let matrix = build_b_matrix(&weights, &b);
        Ok(SelectionProblem { beta: cfg.beta, t_err, epsilon: cfg.epsilon, states, weights, b, matrix, diversity })
    }

    /// Solves the QP and picks the top `m`. A solver that runs out of
    /// iterations still yields its best iterate, flagged `converged = false`.
    pub fn solve(&self, ridge: f64, m: usize) -> Result<SelectionReport, SelectionError> {
        let (sol, converged) = match solve_simplex_qp(&self.matrix, ridge) {
            Ok(s) => (s, true),
            Err(QpError::NoConvergence { best }) => (best, false),
            Err(e) => return Err(e.into()),
        };
        let w: Vec<f64> = sol.w.iter().map(|x| x.max(0.0)).collect();
        let chosen = select_top_m(&w, m);
        Ok(SelectionReport {
            policies: w.len(),
            states: self.states.len(),
            t_err: self.t_err,
            w,
            chosen,
            objective: sol.objective,
            iterations: sol.iterations,
            converged,
            diversity: self.diversity.clone(),
        })
    }
}

/// Builds the problem and solves it in one call.
pub fn select_policies(
    policies: &[PolicyParams],
    log: &TrainingLog,
    space: &ActionSpace,
    cfg: &SelectionConfig,
) -> Result<(SelectionProblem, SelectionReport), SelectionError> {
    let problem = SelectionProblem::build(policies, log, space, cfg)?;
    let report = problem.solve(cfg.ridge, cfg.m)?;
    Ok((problem, report))
}

const REPORT_HEADER: &str = "# seerl-selection-report version=1";

fn join(xs: impl IntoIterator<Item = impl ToString>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl SelectionReport {
    pub fn mean_pairwise_kl(&self) -> f64 {
        mean_off_diagonal(&self.diversity)
    }

    /// Plain-text report; floats use the shortest round-trip representation.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        writeln!(out, "policies {}", self.policies)?;
        writeln!(out, "states {}", self.states)?;
        writeln!(out, "t_err {}", self.t_err)?;
        writeln!(out, "objective {}", self.objective)?;
        writeln!(out, "iterations {}", self.iterations)?;
        writeln!(out, "converged {}", self.converged)?;
        writeln!(out, "w {}", join(&self.w))?;
        writeln!(out, "chosen {}", join(&self.chosen))?;
        writeln!(out, "mean_pairwise_kl {}", self.mean_pairwise_kl())?;
        writeln!(out, "diversity")?;
        for i in 0..self.diversity.nrows() {
            writeln!(out, "{}", join(self.diversity.row(i).iter()))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, SelectionError> {
        let bad = |m: &str| SelectionError::BadReport(m.to_string());
        let lines: Vec<String> = r.lines().collect::<Result<_, _>>().map_err(|e| bad(&e.to_string()))?;
        if lines.first().map(String::as_str) != Some(REPORT_HEADER) {
            return Err(bad("missing header"));
        }
        let mut fields: HashMap<&str, &str> = HashMap::new();
        let mut idx = 1;
        while idx < lines.len() && lines[idx] != "diversity" {
            let (k, v) = lines[idx].split_once(' ').unwrap_or((lines[idx].as_str(), ""));
            fields.insert(k, v);
            idx += 1;
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("missing `{k}`")));
        let num = |k: &str| -> Result<f64, SelectionError> { get(k)?.parse().map_err(|_| bad(k)) };
        let floats = |s: &str| -> Result<Vec<f64>, SelectionError> {
            s.split_whitespace().map(|x| x.parse().map_err(|_| bad(s))).collect()
        };
        let policies: usize = get("policies")?.parse().map_err(|_| bad("policies"))?;
        let chosen: Vec<usize> = get("chosen")?
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| bad("chosen")))
            .collect::<Result<_, _>>()?;
        let rows = lines.get(idx + 1..idx + 1 + policies).ok_or_else(|| bad("truncated diversity matrix"))?;
        let mut flat = Vec::with_capacity(policies * policies);
        for row in rows {
            let v = floats(row)?;
            if v.len() != policies {
                return Err(bad("diversity row length"));
            }
            flat.extend(v);
        }
        let w = floats(get("w")?)?;
        if w.len() != policies || chosen.iter().any(|&c| c >= policies) {
            return Err(bad("inconsistent sizes"));
        }
        Ok(SelectionReport {
            policies,
            states: get("states")?.parse().map_err(|_| bad("states"))?,
            t_err: num("t_err")?,
            w,
            chosen,
            objective: num("objective")?,
            iterations: get("iterations")?.parse().map_err(|_| bad("iterations"))?,
            converged: get("converged")?.parse().map_err(|_| bad("converged"))?,
            diversity: DMatrix::from_row_slice(policies, policies, &flat),
        })
    }
}
