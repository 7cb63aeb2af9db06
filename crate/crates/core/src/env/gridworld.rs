use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Action, ActionSpace, EnvError, Environment, MdpSpec, Transition};

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

const STEP_COST: f64 = -0.01;
const GOAL_REWARD: f64 = 1.0;

/// Square grid with a fixed start in the top-left corner and the goal in
/// the bottom-right corner. Observations are one-hot over cells (row-major).
///
/// Moving into a wall leaves the agent in place. Every step costs 0.01
/// unless it enters the goal, which pays +1 and ends the episode.
#[derive(Debug, Clone)]
pub struct GridWorld {
    spec: MdpSpec,
    size: usize,
    pos: (usize, usize),
    steps: usize,
    done: bool,
    started: bool,
    // Unused by the deterministic dynamics; kept so every env is keyed the same way.
    #[allow(dead_code)]
    rng: ChaCha8Rng,
}

impl GridWorld {
    pub fn new() -> Self {
        Self::with_size(5)
    }

    pub fn with_size(size: usize) -> Self {
        assert!(size >= 2, "grid must be at least 2x2");
        GridWorld {
            spec: MdpSpec {
                state_dim: size * size,
                action_space: ActionSpace::Discrete(4),
                gamma: 0.99,
                horizon: 100,
            },
            size,
            pos: (0, 0),
            steps: 0,
            done: false,
            started: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn goal(&self) -> (usize, usize) {
        (self.size - 1, self.size - 1)
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    /// Places the agent at `pos` mid-episode. Intended for tests and tracing.
    pub fn set_position(&mut self, pos: (usize, usize)) {
        assert!(pos.0 < self.size && pos.1 < self.size);
        self.pos = pos;
    }

    pub fn encode(&self, pos: (usize, usize)) -> Vec<f64> {
        let mut s = vec![0.0; self.size * self.size];
        s[pos.0 * self.size + pos.1] = 1.0;
        s
    }

    /// Inverse of [`GridWorld::encode`].
    pub fn decode(&self, state: &[f64]) -> Option<(usize, usize)> {
        let idx = state.iter().position(|&x| x == 1.0)?;
        Some((idx / self.size, idx % self.size))
    }
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for GridWorld {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = (0, 0);
        self.steps = 0;
        self.done = false;
        self.started = true;
        self.encode(self.pos)
    }

    fn step(&mut self, action: &Action) -> Result<Transition, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let a = match action {
            Action::Discrete(a) if *a < 4 => *a,
            other => return Err(EnvError::InvalidAction { action: other.to_string() }),
        };
        let state = self.encode(self.pos);
        let (r, c) = self.pos;
        let last = self.size - 1;
        self.pos = match a {
            UP => (r.saturating_sub(1), c),
            RIGHT => (r, (c + 1).min(last)),
            DOWN => ((r + 1).min(last), c),
            _ => (r, c.saturating_sub(1)),
        };
        self.steps += 1;
        let at_goal = self.pos == self.goal();
        let reward = if at_goal { GOAL_REWARD } else { STEP_COST };
        self.done = at_goal || self.steps >= self.spec.horizon;
        Ok(Transition {
            state,
            action: action.clone(),
            reward,
            next_state: self.encode(self.pos),
            done: self.done,
        })
    }

    fn reward_bounds(&self) -> (f64, f64) {
        (STEP_COST, GOAL_REWARD)
    }

    fn return_bounds(&self) -> (f64, f64) {
        (STEP_COST * self.spec.horizon as f64, GOAL_REWARD)
    }
}
