use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Action, ActionSpace, EnvError, Environment, MdpSpec, Transition};

pub const DT: f64 = 0.1;
const POS_LIMIT: f64 = 2.0;

/// Planar point mass steered toward the origin.
///
/// State is `[x, y, vx, vy]`. The action in `[-1, 1]^2` is the commanded
/// velocity: `v' = a`, `p' = clamp(p + DT * a + noise, ±2)`. The reward is
/// the negative squared distance of `p'` to the origin.
#[derive(Debug, Clone)]
pub struct PointMass2D {
    spec: MdpSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    noise_std: f64,
    clip_actions: bool,
    steps: usize,
    done: bool,
    started: bool,
    rng: ChaCha8Rng,
}

impl PointMass2D {
    pub fn new() -> Self {
        PointMass2D {
            spec: MdpSpec {
                state_dim: 4,
                action_space: ActionSpace::Continuous { low: vec![-1.0; 2], high: vec![1.0; 2] },
                gamma: 0.99,
                horizon: 200,
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            noise_std: 0.01,
            clip_actions: true,
            steps: 0,
            done: false,
            started: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        assert!(noise_std >= 0.0);
        self.noise_std = noise_std;
        self
    }

    /// With clipping disabled, out-of-bounds actions are rejected instead of
    /// being clamped into the box.
    pub fn with_clipping(mut self, clip_actions: bool) -> Self {
        self.clip_actions = clip_actions;
        self
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    fn state(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

impl Default for PointMass2D {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass2D {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        for p in self.pos.iter_mut() {
            *p = self.rng.random_range(-1.0..=1.0);
        }
        self.vel = [0.0; 2];
        self.steps = 0;
        self.done = false;
        self.started = true;
        self.state()
    }

    fn step(&mut self, action: &Action) -> Result<Transition, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let a = match action {
            Action::Continuous(a) if a.len() == 2 && a.iter().all(|x| x.is_finite()) => a,
            other => return Err(EnvError::InvalidAction { action: other.to_string() }),
        };
        if !self.clip_actions && !self.spec.action_space.contains(action) {
            return Err(EnvError::OutOfBoundsAction { action: action.to_string() });
        }
        let prev = self.state();
        for d in 0..2 {
            let u = a[d].clamp(-1.0, 1.0);
            let noise = if self.noise_std > 0.0 {
                self.noise_std * self.rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            self.vel[d] = u;
            self.pos[d] = (self.pos[d] + DT * u + noise).clamp(-POS_LIMIT, POS_LIMIT);
        }
        self.steps += 1;
        self.done = self.steps >= self.spec.horizon;
        let reward = -(self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1]);
        Ok(Transition {
            state: prev,
            action: action.clone(),
            reward,
            next_state: self.state(),
            done: self.done,
        })
    }

    fn reward_bounds(&self) -> (f64, f64) {
        (-2.0 * POS_LIMIT * POS_LIMIT, 0.0)
    }

    fn return_bounds(&self) -> (f64, f64) {
        (-2.0 * POS_LIMIT * POS_LIMIT * self.spec.horizon as f64, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_dynamics_are_linear() {
        let mut env = PointMass2D::new().with_noise(0.0);
        let s = env.reset(5);
        let a = vec![0.5, -0.25];
        let tr = env.step(&Action::Continuous(a.clone())).unwrap();
        assert_eq!(tr.next_state[0], s[0] + DT * a[0]);
        assert_eq!(tr.next_state[1], s[1] + DT * a[1]);
        assert_eq!(&tr.next_state[2..], &a[..]);
        let expected = -(tr.next_state[0].powi(2) + tr.next_state[1].powi(2));
        assert_eq!(tr.reward, expected);
    }

    #[test]
    fn out_of_bounds_rejected_without_clipping() {
        let mut env = PointMass2D::new().with_clipping(false);
        env.reset(0);
        assert!(matches!(
            env.step(&Action::Continuous(vec![1.5, 0.0])),
            Err(EnvError::OutOfBoundsAction { .. })
        ));
        let mut env = PointMass2D::new();
        env.reset(0);
        let tr = env.step(&Action::Continuous(vec![1.5, 0.0])).unwrap();
        assert_eq!(tr.next_state[2], 1.0);
    }

    #[test]
    fn episode_ends_at_horizon_with_bounded_reward() {
        let mut env = PointMass2D::new();
        env.reset(9);
        let (lo, hi) = env.reward_bounds();
        let mut n = 0;
        loop {
            let tr = env.step(&Action::Continuous(vec![1.0, 1.0])).unwrap();
            n += 1;
            assert!(tr.reward >= lo && tr.reward <= hi);
            if tr.done {
                break;
            }
        }
        assert_eq!(n, 200);
    }

    #[test]
    fn noisy_replay_matches() {
        let run = |seed| {
            let mut env = PointMass2D::new();
            env.reset(seed);
            (0..50)
                .map(|i| env.step(&Action::Continuous(vec![(i as f64 * 0.1).sin(), 0.3])).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(2), run(2));
        assert_ne!(run(2), run(3));
    }
}
