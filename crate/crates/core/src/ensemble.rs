//! Action combiners: turn the `m` candidate actions proposed for one state
//! into the single action executed in the environment.
//!
//! Discrete spaces use [`majority_vote`]. Continuous spaces use one of
//! [`average`], [`bin_vote`], [`density_select`] (Parzen windows) or
//! [`select_through_elimination`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::env::{Action, ActionSpace};

pub const DEFAULT_BINS: usize = 5;
pub const DEFAULT_BANDWIDTH: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("no candidate actions")]
    Empty,
    #[error("strategy `{strategy}` does not apply to a {space} action space")]
    StrategySpaceMismatch { strategy: Strategy, space: &'static str },
    #[error("candidate action {0} does not belong to the action space")]
    ForeignAction(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Majority,
    Average,
    Binning,
    DensityBased,
    Elimination,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Majority,
        Strategy::Average,
        Strategy::Binning,
        Strategy::DensityBased,
        Strategy::Elimination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Majority => "majority",
            Strategy::Average => "average",
            Strategy::Binning => "binning",
            Strategy::DensityBased => "dbs",
            Strategy::Elimination => "ste",
        }
    }

    pub fn supports(self, space: &ActionSpace) -> bool {
        match self {
            Strategy::Majority => space.is_discrete(),
            _ => !space.is_discrete(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = EnsembleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| EnsembleError::UnknownStrategy(s.to_string()))
    }
}

/// A configured combiner bound to an action space.
#[derive(Debug, Clone, PartialEq)]
pub struct Combiner {
    pub strategy: Strategy,
    pub space: ActionSpace,
    pub n_bins: usize,
    pub bandwidth: f64,
}

impl Combiner {
    pub fn new(strategy: Strategy, space: ActionSpace) -> Self {
        Combiner { strategy, space, n_bins: DEFAULT_BINS, bandwidth: DEFAULT_BANDWIDTH }
    }

    /// Checks that the strategy can be used with the space. A single
    /// candidate is always acceptable: every combiner is the identity on it.
    pub fn check(&self, m: usize) -> Result<(), EnsembleError> {
        if m <= 1 || self.strategy.supports(&self.space) {
            Ok(())
        } else {
            Err(EnsembleError::StrategySpaceMismatch {
                strategy: self.strategy,
                space: if self.space.is_discrete() { "discrete" } else { "continuous" },
            })
        }
    }

    pub fn combine<R: Rng + ?Sized>(&self, actions: &[Action], rng: &mut R) -> Result<Action, EnsembleError> {
        if actions.is_empty() {
            return Err(EnsembleError::Empty);
        }
        self.check(actions.len())?;
        if actions.len() == 1 {
            return Ok(actions[0].clone());
        }
        if self.strategy == Strategy::Majority {
            let idx: Vec<usize> = actions
                .iter()
                .map(|a| a.as_discrete().ok_or_else(|| EnsembleError::ForeignAction(a.to_string())))
                .collect::<Result<_, _>>()?;
            return Ok(Action::Discrete(majority_vote(&idx, rng)));
        }
        let vecs: Vec<&[f64]> = actions
            .iter()
            .map(|a| a.as_continuous().ok_or_else(|| EnsembleError::ForeignAction(a.to_string())))
            .collect::<Result<_, _>>()?;
        let ActionSpace::Continuous { low, high } = &self.space else { unreachable!() };
        if vecs.iter().any(|v| v.len() != low.len()) {
            return Err(EnsembleError::ForeignAction("dimension mismatch".into()));
        }
        let out = match self.strategy {
            Strategy::Average => average(&vecs),
            Strategy::Binning => bin_vote(&vecs, low, high, self.n_bins, rng),
            Strategy::DensityBased => density_select(&vecs, self.bandwidth),
            Strategy::Elimination => select_through_elimination(&vecs),
            Strategy::Majority => unreachable!(),
        };
        Ok(Action::Continuous(out))
    }
}

/// Most frequent action; ties are broken uniformly at random among the
/// tied actions.
pub fn majority_vote<R: Rng + ?Sized>(actions: &[usize], rng: &mut R) -> usize {
    assert!(!actions.is_empty(), "majority_vote needs at least one action");
    let n = actions.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; n];
    for &a in actions {
        counts[a] += 1;
    }
    let best = *counts.iter().max().unwrap();
    let tied: Vec<usize> = (0..n).filter(|&a| counts[a] == best).collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    }
}

pub fn average(actions: &[&[f64]]) -> Vec<f64> {
    assert!(!actions.is_empty());
    let k = actions[0].len();
    let m = actions.len() as f64;
    (0..k).map(|d| actions.iter().map(|a| a[d]).sum::<f64>() / m).collect()
}

/// Index of the bin holding `x` when `[low, high]` is cut into `n` equal
/// bins. Values at or beyond `high` land in the last bin.
pub fn bin_index(x: f64, low: f64, high: f64, n: usize) -> usize {
    let frac = (x - low) / (high - low);
    if !(frac > 0.0) {
        return 0;
    }
    ((frac * n as f64).floor() as usize).min(n - 1)
}

/// Per dimension, the mean of the members of the most populated bin.
pub fn bin_vote<R: Rng + ?Sized>(
    actions: &[&[f64]],
    low: &[f64],
    high: &[f64],
    n_bins: usize,
    rng: &mut R,
) -> Vec<f64> {
    assert!(!actions.is_empty() && n_bins >= 1);
    (0..low.len())
        .map(|d| {
            let mut counts = vec![0usize; n_bins];
            let mut sums = vec![0.0; n_bins];
            for a in actions {
                let b = bin_index(a[d], low[d], high[d], n_bins);
                counts[b] += 1;
                sums[b] += a[d];
            }
            let best = *counts.iter().max().unwrap();
            let tied: Vec<usize> = (0..n_bins).filter(|&b| counts[b] == best).collect();
            let b = if tied.len() == 1 { tied[0] } else { tied[rng.random_range(0..tied.len())] };
            sums[b] / counts[b] as f64
        })
        .collect()
}

/// Parzen-window density of each candidate, `d_i = sum_j exp(-|a_i - a_j|^2 / h^2)`
/// with the self term included; returns the densest candidate (lowest index
/// on ties).
pub fn density_select(actions: &[&[f64]], h: f64) -> Vec<f64> {
    assert!(!actions.is_empty() && h > 0.0);
    let h2 = h * h;
    let mut best = 0;
    let mut best_density = f64::NEG_INFINITY;
    for (i, ai) in actions.iter().enumerate() {
        let density: f64 = actions
            .iter()
            .map(|aj| {
                let sq: f64 = ai.iter().zip(aj.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sq / h2).exp()
            })
            .sum();
        if density > best_density {
            best = i;
            best_density = density;
        }
    }
    actions[best].to_vec()
}

/// Repeatedly drops the candidate farthest (Euclidean) from the current
/// mean until two remain, then returns their mean. Distance ties drop the
/// higher index.
pub fn select_through_elimination(actions: &[&[f64]]) -> Vec<f64> {
    assert!(!actions.is_empty());
    let mut alive: Vec<&[f64]> = actions.to_vec();
    while alive.len() > 2 {
        let mean = average(&alive);
        let mut worst = 0;
        let mut worst_dist = f64::NEG_INFINITY;
        for (i, a) in alive.iter().enumerate() {
            let dist: f64 = a.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum();
            if dist >= worst_dist {
                worst = i;
                worst_dist = dist;
            }
        }
        alive.remove(worst);
    }
    average(&alive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority_vote(&[1, 1, 2], &mut rng()), 1);
        assert_eq!(majority_vote(&[2, 2, 2], &mut rng()), 2);
        let mut r = rng();
        let zeros = (0..4000).filter(|_| majority_vote(&[0, 1], &mut r) == 0).count();
        assert!((zeros as f64 / 4000.0 - 0.5).abs() < 0.03, "{zeros}");
    }

    #[test]
    fn average_examples() {
        assert!((average(&[&[0.2], &[0.4]])[0] - 0.3).abs() < 1e-15);
        assert_eq!(average(&[&[0.7, -0.1], &[0.7, -0.1]]), vec![0.7, -0.1]);
        assert_eq!(average(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]]), vec![0.0, 0.0]);
    }

    #[test]
    fn bin_examples() {
        let acts: [&[f64]; 3] = [&[0.1], &[0.12], &[0.9]];
        let out = bin_vote(&acts, &[0.0], &[1.0], 5, &mut rng());
        assert!((out[0] - 0.11).abs() < 1e-15);
        let same_bin: [&[f64]; 3] = [&[0.41], &[0.45], &[0.5]];
        assert_eq!(bin_vote(&same_bin, &[0.0], &[1.0], 5, &mut rng()), average(&same_bin));
        assert_eq!(bin_vote(&[&[0.33]], &[0.0], &[1.0], 5, &mut rng()), vec![0.33]);
        assert_eq!(bin_index(1.0, 0.0, 1.0, 5), 4);
        assert_eq!(bin_index(-3.0, 0.0, 1.0, 5), 0);
    }

    #[test]
    fn density_examples() {
        let a: &[f64] = &[0.3, 0.3];
        let b: &[f64] = &[0.9, -0.2];
        assert_eq!(density_select(&[a, a, a], 1e-4), a.to_vec());
        assert_eq!(density_select(&[b, a, a], 1e-4), a.to_vec());
        assert_eq!(density_select(&[b], 1e-4), b.to_vec());
        // distinct candidates all have density 1: lowest index wins
        assert_eq!(density_select(&[b, a], 1e-4), b.to_vec());
    }

    #[test]
    fn elimination_examples() {
        assert_eq!(select_through_elimination(&[&[0.0, 1.0], &[1.0, 0.0]]), vec![0.5, 0.5]);
        assert_eq!(select_through_elimination(&[&[0.4], &[0.4], &[0.4]]), vec![0.4]);
        let out = select_through_elimination(&[&[0.0], &[0.1], &[10.0]]);
        assert!((out[0] - 0.05).abs() < 1e-15);
        // symmetric pair around the mean: the higher index goes first
        let out = select_through_elimination(&[&[-1.0], &[0.0], &[1.0]]);
        assert_eq!(out, vec![-0.5]);
    }

    #[test]
    fn strategy_names() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("vote".parse::<Strategy>().is_err());
    }

    #[test]
    fn combiner_space_checks() {
        let cont = ActionSpace::Continuous { low: vec![-1.0], high: vec![1.0] };
        let c = Combiner::new(Strategy::Majority, cont.clone());
        let acts = vec![Action::Continuous(vec![0.1]), Action::Continuous(vec![0.2])];
        assert!(matches!(
            c.combine(&acts, &mut rng()),
            Err(EnsembleError::StrategySpaceMismatch { .. })
        ));
        // one candidate passes through regardless of strategy
        assert_eq!(c.combine(&acts[..1], &mut rng()).unwrap(), acts[0]);
        let c = Combiner::new(Strategy::Average, ActionSpace::Discrete(3));
        assert!(c.combine(&[Action::Discrete(0), Action::Discrete(1)], &mut rng()).is_err());
        let c = Combiner::new(Strategy::Elimination, cont);
        assert_eq!(c.combine(&[], &mut rng()), Err(EnsembleError::Empty));
        assert_eq!(
            c.combine(&acts, &mut rng()).unwrap(),
            Action::Continuous(vec![(0.1 + 0.2) / 2.0])
        );
    }
}
