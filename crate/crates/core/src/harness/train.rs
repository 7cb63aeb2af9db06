//! Training runs for every mode: the cyclic schedule and its baselines.

use rayon::prelude::*;

use crate::env::Environment;
use crate::learner::{policy_distribution, train_step, Architecture, LossConfig, PolicyParams};
use crate::schedule::{random_perturb, ScheduleSpec};
use crate::seeding::{derive_seed, rng_for};
use crate::snapshot::{PolicySnapshot, SnapshotMeta};
use crate::training_log::{ActionKind, TrainingLog};

use super::config::{ExperimentConfig, Mode};
use super::HarnessError;

// RNG stream ids; each run index gets its own block.
const INIT_STREAM: u64 = 1;
const ACTION_STREAM: u64 = 2;
const PERTURB_STREAM: u64 = 3;
const RESET_STREAM: u64 = 1 << 20;
const RUN_STRIDE: u64 = 1 << 40;

/// Output of [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub run_id: String,
    /// Ordered by cycle index.
    pub snapshots: Vec<PolicySnapshot>,
    pub log: TrainingLog,
    /// Environment transitions consumed, over all runs of the mode.
    pub env_steps: u64,
}

impl TrainingRun {
    pub fn policies(&self) -> Vec<PolicyParams> {
        self.snapshots.iter().map(|s| s.params.clone()).collect()
    }
}

/// How one sequential training run is driven.
struct Plan {
    steps: u64,
    lr: Box<dyn Fn(u64) -> f64 + Sync>,
    snapshot_steps: Vec<u64>,
    /// Random gradient step applied after every snapshot but the last.
    perturb: Option<(f64, f64)>,
    /// Added to the 1-based position of each snapshot to form its cycle index.
    cycle_offset: u64,
    run_index: u64,
}

impl Plan {
    fn cycle_of(&self, t: u64) -> u32 {
        let pos = self.snapshot_steps.partition_point(|&s| s < t) as u64;
        (self.cycle_offset + pos + 1) as u32
    }
}

fn annealed(alpha0: f64, steps: u64) -> Result<Box<dyn Fn(u64) -> f64 + Sync>, HarnessError> {
    let spec = ScheduleSpec::new(alpha0, steps, 1)?;
    Ok(Box::new(move |t| spec.lr_at(t).expect("step within schedule")))
}

/// Steps at which the constant-lr control takes its `M` snapshots: evenly
/// spaced through the last tenth of training, ending at `T`.
pub fn tail_snapshot_steps(total_steps: u64, cycles: u64) -> Vec<u64> {
    let gap = total_steps.div_ceil(10 * cycles);
    (1..=cycles).map(|i| total_steps - (cycles - i) * gap).collect()
}

/// Trains according to `cfg.mode` and returns the `M` snapshots with the
/// per-step log. Deterministic in `(cfg, seed)`.
pub fn run_training(cfg: &ExperimentConfig, seed: u64) -> Result<TrainingRun, HarnessError> {
    cfg.validate()?;
    let t = cfg.total_steps;
    let m = cfg.cycles;
    let plans: Vec<Plan> = match cfg.mode {
        Mode::Seerl => {
            let spec = cfg.schedule()?;
            vec![Plan {
                steps: t,
                lr: Box::new(move |s| spec.lr_at(s).expect("step within schedule")),
                snapshot_steps: spec.snapshot_steps(),
                perturb: None,
                cycle_offset: 0,
                run_index: 0,
            }]
        }
        Mode::RandomPerturb => {
            let lr = cfg.base_lr();
            vec![Plan {
                steps: t,
                lr: Box::new(move |_| lr),
                snapshot_steps: cfg.schedule()?.snapshot_steps(),
                perturb: Some((cfg.sigma, lr)),
                cycle_offset: 0,
                run_index: 0,
            }]
        }
        Mode::ConstantLr => vec![Plan {
            steps: t,
            lr: annealed(cfg.alpha0, t)?,
            snapshot_steps: tail_snapshot_steps(t, m),
            perturb: None,
            cycle_offset: 0,
            run_index: 0,
        }],
        Mode::Independent => (0..m)
            .map(|i| {
                Ok(Plan {
                    steps: t,
                    lr: annealed(cfg.alpha0, t)?,
                    snapshot_steps: vec![t],
                    perturb: None,
                    cycle_offset: i,
                    run_index: i,
                })
            })
            .collect::<Result<_, HarnessError>>()?,
    };

    let run_id = cfg.run_id(seed);
    let parts: Vec<(Vec<PolicySnapshot>, TrainingLog)> = plans
        .par_iter()
        .map(|plan| train_one(cfg, seed, &run_id, plan))
        .collect::<Result<_, _>>()?;

    let mut parts = parts.into_iter();
    let (mut snapshots, mut log) = parts.next().expect("at least one plan");
    for (snaps, part) in parts {
        snapshots.extend(snaps);
        log.extend_from(&part)?;
    }
    Ok(TrainingRun { run_id, snapshots, log, env_steps: t * plans.len() as u64 })
}

fn train_one(
    cfg: &ExperimentConfig,
    seed: u64,
    run_id: &str,
    plan: &Plan,
) -> Result<(Vec<PolicySnapshot>, TrainingLog), HarnessError> {
    let mut env: Box<dyn Environment> = cfg.env.make();
    let spec = env.spec().clone();
    let arch = Architecture::for_spec(&spec, cfg.hidden);
    let base = plan.run_index * RUN_STRIDE;
    let mut params = PolicyParams::init(arch, &mut rng_for(seed, base + INIT_STREAM));
    let mut action_rng = rng_for(seed, base + ACTION_STREAM);
    let mut perturb_rng = rng_for(seed, base + PERTURB_STREAM);
    let loss_cfg = LossConfig { gamma: spec.gamma, c_v: cfg.c_v, entropy_coef: cfg.entropy_coef };
    let kind = match &spec.action_space {
        crate::env::ActionSpace::Discrete(n) => ActionKind::Discrete(*n),
        crate::env::ActionSpace::Continuous { low, .. } => ActionKind::Continuous(low.len()),
    };
    let mut log = TrainingLog::new(spec.state_dim, kind);
    let mut snapshots = Vec::with_capacity(plan.snapshot_steps.len());

    let mut episode = 0u64;
    let mut state = env.reset(derive_seed(seed, base + RESET_STREAM + episode));
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut next_snapshot = 0usize;
    for t in 1..=plan.steps {
        let dist = policy_distribution(&params, &state).map_err(|source| HarnessError::Learner { step: t, source })?;
        let action = dist.sample(&mut action_rng);
        let tr = env.step(&action).map_err(|source| HarnessError::Env { step: t, source })?;
        let done = tr.done;
        state = tr.next_state.clone();
        batch.push(tr);

        let snapshot_now = plan.snapshot_steps.get(next_snapshot) == Some(&t);
        if batch.len() == cfg.batch_size || snapshot_now || t == plan.steps {
            let (updated, losses) = train_step(&params, &batch, (plan.lr)(t), &loss_cfg)
                .map_err(|source| HarnessError::Learner { step: t, source })?;
            let first = t + 1 - batch.len() as u64;
            for (k, (tr, loss)) in batch.drain(..).zip(losses).enumerate() {
                let step = first + k as u64;
                log.push(step, plan.cycle_of(step), &tr.state, tr.action, loss.total.abs())?;
            }
            params = updated;
        }
        if snapshot_now {
            next_snapshot += 1;
            snapshots.push(PolicySnapshot {
                params: params.clone(),
                meta: SnapshotMeta {
                    run_id: run_id.to_string(),
                    env_id: cfg.env.as_str().to_string(),
                    cycle_index: plan.cycle_offset + next_snapshot as u64,
                    step: t,
                    alpha0: cfg.alpha0,
                    total_steps: cfg.total_steps,
                    cycles: cfg.cycles,
                },
            });
            if let Some((sigma, lr)) = plan.perturb {
                if next_snapshot < plan.snapshot_steps.len() {
                    params = random_perturb(&params, sigma, lr, &mut perturb_rng);
                }
            }
        }
        if done {
            episode += 1;
            state = env.reset(derive_seed(seed, base + RESET_STREAM + episode));
        }
    }
    Ok((snapshots, log))
}
