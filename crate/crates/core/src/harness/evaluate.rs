//! Greedy evaluation of single policies and of combined ensembles.

use crate::ensemble::Combiner;
use crate::env::{Action, EnvId};
use crate::learner::{policy_distribution, PolicyParams};
use crate::seeding::{derive_seed, rng_for};

use super::HarnessError;

const EVAL_RESET_STREAM: u64 = 1 << 30;
const COMBINE_STREAM: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeReturn {
    pub undiscounted: f64,
    pub discounted: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: Vec<EpisodeReturn>,
}

impl EvalSummary {
    pub fn mean(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.undiscounted))
    }

    /// Population standard deviation of the undiscounted returns.
    pub fn std(&self) -> f64 {
        let mu = self.mean();
        mean(self.episodes.iter().map(|e| (e.undiscounted - mu).powi(2))).sqrt()
    }

    pub fn mean_discounted(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.discounted))
    }

    pub fn total_steps(&self) -> u64 {
        self.episodes.iter().map(|e| e.steps).sum()
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    xs.sum::<f64>() / n as f64
}

/// Runs `episodes` episodes. At every state each policy proposes its greedy
/// action (argmax or Gaussian mean) and `combiner` picks the executed one.
///
/// Episode `e` always starts from the reset seed derived from `(seed, e)`,
/// so different policy sets are compared on the same initial states.
pub fn evaluate(
    env_id: EnvId,
    policies: &[&PolicyParams],
    combiner: &Combiner,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary, HarnessError> {
    if policies.is_empty() {
        return Err(HarnessError::Config("evaluation needs at least one policy".into()));
    }
    combiner.check(policies.len())?;
    let mut env = env_id.make();
    let gamma = env.spec().gamma;
    let mut rng = rng_for(seed, COMBINE_STREAM);
    let mut out = Vec::with_capacity(episodes);
    for e in 0..episodes as u64 {
        let mut state = env.reset(derive_seed(seed, EVAL_RESET_STREAM + e));
        let mut ret = EpisodeReturn { undiscounted: 0.0, discounted: 0.0, steps: 0 };
        let mut discount = 1.0;
        loop {
            let proposals: Vec<Action> = policies
                .iter()
                .map(|p| policy_distribution(p, &state).map(|d| d.greedy()))
                .collect::<Result<_, _>>()
                .map_err(|source| HarnessError::Learner { step: ret.steps + 1, source })?;
            let action = combiner.combine(&proposals, &mut rng)?;
            let tr = env.step(&action).map_err(|source| HarnessError::Env { step: ret.steps + 1, source })?;
            ret.undiscounted += tr.reward;
            ret.discounted += discount * tr.reward;
            discount *= gamma;
            ret.steps += 1;
            if tr.done {
                break;
            }
            state = tr.next_state;
        }
        out.push(ret);
    }
    Ok(EvalSummary { episodes: out })
}
