//! Deterministic, seedable toy MDPs.
//!
//! Every environment owns a single ChaCha stream (a counter-based generator)
//! that is re-keyed on [`Environment::reset`]; there is no global random
//! state, so replaying a `(seed, actions)` pair reproduces the transition
//! sequence bit for bit.

mod cartpole;
pub mod gridworld;
mod pointmass;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use cartpole::CartPoleLite;
pub use gridworld::GridWorld;
pub use pointmass::PointMass2D;

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }

    /// Number of discrete actions, or the dimension of a continuous action.
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete(n) => *n,
            ActionSpace::Continuous { low, .. } => low.len(),
        }
    }

    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete(n), Action::Discrete(a)) => a < n,
            (ActionSpace::Continuous { low, high }, Action::Continuous(a)) => {
                a.len() == low.len()
                    && a.iter()
                        .zip(low.iter().zip(high))
                        .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Action::Discrete(_) => None,
            Action::Continuous(a) => Some(a),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Discrete(a) => write!(f, "{a}"),
            Action::Continuous(v) => {
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

/// Static description of an MDP: observation size, action space, discount
/// and episode horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub gamma: f64,
    pub horizon: usize,
}

impl MdpSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.state_dim == 0 {
            return Err(EnvError::InvalidSpec("state_dim must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(EnvError::InvalidSpec(format!("gamma {} outside (0,1)", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(EnvError::InvalidSpec("horizon must be at least 1".into()));
        }
        if let ActionSpace::Continuous { low, high } = &self.action_space {
            if low.len() != high.len() || low.is_empty() {
                return Err(EnvError::InvalidSpec("bad continuous bounds".into()));
            }
            if low.iter().zip(high).any(|(l, h)| !(l < h)) {
                return Err(EnvError::InvalidSpec("low must be < high".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action {action} outside the action space bounds")]
    OutOfBoundsAction { action: String },
    #[error("action {action} does not belong to the action space")]
    InvalidAction { action: String },
    #[error("step called on a finished episode")]
    StepAfterDone,
    #[error("step called before reset")]
    NotReset,
    #[error("unknown environment id `{0}`")]
    UnknownEnv(String),
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
}

pub trait Environment: Send {
    fn spec(&self) -> &MdpSpec;

    /// Starts a new episode; the same seed always yields the same initial state.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &Action) -> Result<Transition, EnvError>;

    /// Per-step reward bounds `(min, max)`.
    fn reward_bounds(&self) -> (f64, f64);

    /// Bounds on the undiscounted return of one episode.
    fn return_bounds(&self) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnvId {
    GridWorld,
    CartPoleLite,
    PointMass2D,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::GridWorld, EnvId::CartPoleLite, EnvId::PointMass2D];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::GridWorld => "gridworld",
            EnvId::CartPoleLite => "cartpole-lite",
            EnvId::PointMass2D => "pointmass2d",
        }
    }

    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvId::GridWorld => Box::new(GridWorld::new()),
            EnvId::CartPoleLite => Box::new(CartPoleLite::new()),
            EnvId::PointMass2D => Box::new(PointMass2D::new()),
        }
    }

    /// Whether observations come from a finite set (one-hot cells) rather
    /// than a continuum.
    pub fn has_discrete_states(self) -> bool {
        matches!(self, EnvId::GridWorld)
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| EnvError::UnknownEnv(s.to_string()))
    }
}

pub fn make_env(id: &str) -> Result<Box<dyn Environment>, EnvError> {
    Ok(id.parse::<EnvId>()?.make())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_roundtrip() {
        for id in EnvId::ALL {
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
            let env = make_env(id.as_str()).unwrap();
            env.spec().validate().unwrap();
        }
        assert_eq!(
            make_env("atari").err(),
            Some(EnvError::UnknownEnv("atari".into()))
        );
    }

    #[test]
    fn spec_validation_rejects_bad_bounds() {
        let spec = MdpSpec {
            state_dim: 2,
            action_space: ActionSpace::Continuous { low: vec![1.0], high: vec![1.0] },
            gamma: 0.9,
            horizon: 1,
        };
        assert!(spec.validate().is_err());
        let spec = MdpSpec { gamma: 1.0, action_space: ActionSpace::Discrete(2), ..spec };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn action_space_membership() {
        let space = ActionSpace::Continuous { low: vec![-1.0, -1.0], high: vec![1.0, 1.0] };
        assert!(space.contains(&Action::Continuous(vec![1.0, -1.0])));
        assert!(!space.contains(&Action::Continuous(vec![1.01, 0.0])));
        assert!(!space.contains(&Action::Discrete(0)));
        assert!(ActionSpace::Discrete(4).contains(&Action::Discrete(3)));
        assert!(!ActionSpace::Discrete(4).contains(&Action::Discrete(4)));
    }
}
