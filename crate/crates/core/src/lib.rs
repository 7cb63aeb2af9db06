//! Snapshot ensembles for reinforcement learning.
//!
//! A single actor-critic run is trained under a cyclic cosine learning-rate
//! schedule; a policy snapshot is saved at the end of every cycle. After
//! training, a quadratic program over the logged training data picks `m` of
//! the `M` snapshots, and their actions are combined at evaluation time.

pub mod ensemble;
pub mod env;
pub mod harness;
pub mod learner;
pub mod schedule;
pub mod seeding;
pub mod selection;
pub mod snapshot;
pub mod training_log;
