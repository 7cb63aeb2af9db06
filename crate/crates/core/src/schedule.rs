//! Cyclic cosine-annealed learning rate and snapshot instants.
//!
//! Training of `T` steps is split into `M` cycles of length `ceil(T/M)`.
//! Each cycle restarts at `alpha0` and decays along a half cosine:
//!
//! ```text
//! alpha(t) = alpha0 / 2 * (cos(pi * ((t - 1) mod L) / L) + 1),   L = ceil(T / M)
//! ```
//!
//! A snapshot is due at the last step of every cycle; if `M` does not divide
//! `T` the final cycle is truncated and still snapshotted at `t = T`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::learner::PolicyParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("step {t} outside [1, {total}]")]
    OutOfRangeStep { t: u64, total: u64 },
    #[error("invalid schedule: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    alpha0: f64,
    total_steps: u64,
    cycles: u64,
}

impl ScheduleSpec {
    pub fn new(alpha0: f64, total_steps: u64, cycles: u64) -> Result<Self, ScheduleError> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(ScheduleError::Invalid(format!("alpha0 must be positive, got {alpha0}")));
        }
        if total_steps == 0 {
            return Err(ScheduleError::Invalid("T must be positive".into()));
        }
        if cycles == 0 || cycles > total_steps {
            return Err(ScheduleError::Invalid(format!("M must lie in [1, T], got {cycles}")));
        }
        // With L = ceil(T/M), ceil(T/L) can drop below M (e.g. T=10, M=6);
        // such a schedule cannot produce M snapshots.
        let len = total_steps.div_ceil(cycles);
        if total_steps.div_ceil(len) != cycles {
            return Err(ScheduleError::Invalid(format!(
                "T={total_steps} cannot be split into {cycles} cycles of length {len}"
            )));
        }
        Ok(ScheduleSpec { alpha0, total_steps, cycles })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn cycle_length(&self) -> u64 {
        self.total_steps.div_ceil(self.cycles)
    }

    /// 1-based cycle containing step `t`.
    pub fn cycle_of(&self, t: u64) -> u64 {
        ((t - 1) / self.cycle_length() + 1).min(self.cycles)
    }

    fn check(&self, t: u64) -> Result<(), ScheduleError> {
        if t == 0 || t > self.total_steps {
            return Err(ScheduleError::OutOfRangeStep { t, total: self.total_steps });
        }
        Ok(())
    }

    pub fn lr_at(&self, t: u64) -> Result<f64, ScheduleError> {
        self.check(t)?;
        let len = self.cycle_length();
        let phase = ((t - 1) % len) as f64 / len as f64;
        Ok(self.alpha0 / 2.0 * ((std::f64::consts::PI * phase).cos() + 1.0))
    }

    pub fn snapshot_due(&self, t: u64) -> Result<bool, ScheduleError> {
        self.check(t)?;
        Ok(t.is_multiple_of(self.cycle_length()) || t == self.total_steps)
    }

    /// All steps at which [`ScheduleSpec::snapshot_due`] fires, in order.
    pub fn snapshot_steps(&self) -> Vec<u64> {
        let len = self.cycle_length();
        (1..=self.cycles).map(|i| (i * len).min(self.total_steps)).collect()
    }
}

/// Free-function form of [`ScheduleSpec::lr_at`].
pub fn lr_at(spec: &ScheduleSpec, t: u64) -> Result<f64, ScheduleError> {
    spec.lr_at(t)
}

/// Free-function form of [`ScheduleSpec::snapshot_due`].
pub fn snapshot_due(spec: &ScheduleSpec, t: u64) -> Result<bool, ScheduleError> {
    spec.snapshot_due(t)
}

/// Applies a step along a random gradient: every parameter is decremented
/// by `learning_rate * g` with `g ~ N(0, sigma^2)` drawn i.i.d. from `rng`.
pub fn random_perturb<R: Rng + ?Sized>(
    params: &PolicyParams,
    sigma: f64,
    learning_rate: f64,
    rng: &mut R,
) -> PolicyParams {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    let mut out = params.clone();
    if sigma == 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for p in out.as_mut_slice() {
        *p -= learning_rate * normal.sample(rng);
    }
    out.clamp_log_std();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{Architecture, Head};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig1() -> ScheduleSpec {
        ScheduleSpec::new(0.05, 1_000_000, 5).unwrap()
    }

    #[test]
    fn cycle_start_and_midpoint() {
        let s = fig1();
        assert_eq!(s.lr_at(1).unwrap(), 0.05);
        assert!((s.lr_at(100_001).unwrap() - 0.025).abs() < 1e-15);
        assert_eq!(s.lr_at(200_001).unwrap(), 0.05);
        assert_eq!(s.lr_at(0), Err(ScheduleError::OutOfRangeStep { t: 0, total: 1_000_000 }));
        assert!(s.lr_at(1_000_001).is_err());
    }

    #[test]
    fn snapshot_instants() {
        let s = ScheduleSpec::new(0.1, 1000, 5).unwrap();
        assert!(s.snapshot_due(200).unwrap());
        assert!(!s.snapshot_due(199).unwrap());
        let count = (1..=1000).filter(|&t| s.snapshot_due(t).unwrap()).count();
        assert_eq!(count, 5);
        assert_eq!(s.snapshot_steps(), vec![200, 400, 600, 800, 1000]);
    }

    #[test]
    fn truncated_final_cycle() {
        let s = ScheduleSpec::new(0.1, 10, 3).unwrap();
        assert_eq!(s.cycle_length(), 4);
        let due: Vec<u64> = (1..=10).filter(|&t| s.snapshot_due(t).unwrap()).collect();
        assert_eq!(due, vec![4, 8, 10]);
        assert_eq!(s.cycle_of(9), 3);
        assert_eq!(ScheduleSpec::new(0.1, 10, 4).unwrap().snapshot_steps(), vec![3, 6, 9, 10]);
        assert!(ScheduleSpec::new(0.1, 10, 6).is_err());
        assert!(ScheduleSpec::new(0.1, 3, 4).is_err());
        assert!(ScheduleSpec::new(0.0, 3, 1).is_err());
    }

    #[test]
    fn minimum_at_cycle_end() {
        let s = ScheduleSpec::new(1.0, 100, 4).unwrap();
        for c in 0..4u64 {
            let start = c * 25 + 1;
            let lrs: Vec<f64> = (start..start + 25).map(|t| s.lr_at(t).unwrap()).collect();
            assert_eq!(lrs[0], 1.0);
            assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
            assert!(*lrs.last().unwrap() > 0.0);
        }
    }

    fn params() -> PolicyParams {
        let arch = Architecture { state_dim: 4, hidden: 8, head: Head::Gaussian { dim: 2 } };
        PolicyParams::init(arch, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn zero_sigma_is_identity() {
        let p = params();
        let q = random_perturb(&p, 0.0, 0.5, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(p, q);
    }

    #[test]
    fn perturbation_is_seeded() {
        let p = params();
        let a = random_perturb(&p, 1.0, 0.1, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_perturb(&p, 1.0, 0.1, &mut ChaCha8Rng::seed_from_u64(9));
        let c = random_perturb(&p, 1.0, 0.1, &mut ChaCha8Rng::seed_from_u64(10));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn perturbation_energy_matches_gaussian_algebra() {
        let p = params();
        let (lr, sigma) = (0.2, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 400;
        let mut total = 0.0;
        for _ in 0..trials {
            let q = random_perturb(&p, sigma, lr, &mut rng);
            // log-std entries sit well inside the clamp range, so no clipping here
            total += p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        let expected = (lr * sigma).powi(2) * p.len() as f64;
        let mean = total / trials as f64;
        assert!((mean / expected - 1.0).abs() < 0.05, "mean {mean} expected {expected}");
    }
}
