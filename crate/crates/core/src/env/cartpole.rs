use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, ActionSpace, EnvError, Environment, MdpSpec, Transition};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const INIT_BOUND: f64 = 0.05;

/// Classic pole balancing with explicit Euler integration.
///
/// State is `[x, x_dot, theta, theta_dot]`; action 0 pushes left, 1 pushes
/// right. Reward is +1 for every step, including the one that fails.
#[derive(Debug, Clone)]
pub struct CartPoleLite {
    spec: MdpSpec,
    state: [f64; 4],
    steps: usize,
    done: bool,
    started: bool,
    rng: ChaCha8Rng,
}

impl CartPoleLite {
    pub fn new() -> Self {
        CartPoleLite {
            spec: MdpSpec {
                state_dim: 4,
                action_space: ActionSpace::Discrete(2),
                gamma: 0.99,
                horizon: 500,
            },
            state: [0.0; 4],
            steps: 0,
            done: false,
            started: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Default for CartPoleLite {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CartPoleLite {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        for x in self.state.iter_mut() {
            *x = self.rng.random_range(-INIT_BOUND..=INIT_BOUND);
        }
        self.steps = 0;
        self.done = false;
        self.started = true;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<Transition, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let force = match action {
            Action::Discrete(1) => FORCE_MAG,
            Action::Discrete(0) => -FORCE_MAG,
            other => return Err(EnvError::InvalidAction { action: other.to_string() }),
        };
        let prev = self.state.to_vec();
        let [x, x_dot, theta, theta_dot] = self.state;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        self.state = [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ];
        self.steps += 1;
        let failed = self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > THETA_THRESHOLD;
        self.done = failed || self.steps >= self.spec.horizon;
        Ok(Transition {
            state: prev,
            action: action.clone(),
            reward: 1.0,
            next_state: self.state.to_vec(),
            done: self.done,
        })
    }

    fn reward_bounds(&self) -> (f64, f64) {
        (1.0, 1.0)
    }

    fn return_bounds(&self) -> (f64, f64) {
        (1.0, self.spec.horizon as f64)
    }
}
