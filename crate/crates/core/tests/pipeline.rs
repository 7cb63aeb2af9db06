use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seerl::env::{Action, EnvId};
use seerl::harness::{
    load_selection, load_training, run_experiment, run_selection, write_experiment, ExperimentConfig, Mode,
};
use seerl::learner::{Architecture, PolicyParams};
use seerl::selection::{select_policies, SelectionConfig};
use seerl::training_log::{ActionKind, TrainingLog};

fn gridworld_log(cycles: u32) -> TrainingLog {
    let mut log = TrainingLog::new(25, ActionKind::Discrete(4));
    let mut step = 0;
    for c in 1..=cycles {
        for cell in [0, 1, 6, 12] {
            let mut state = [0.0; 25];
            state[cell] = 1.0;
            for a in 0..4 {
                step += 1;
                log.push(step, c, &state, Action::Discrete(a), 0.1 * (a + 1) as f64).unwrap();
            }
        }
    }
    log
}

fn policy(seed: u64) -> PolicyParams {
    let spec = EnvId::GridWorld.make().spec().clone();
    PolicyParams::init(Architecture::for_spec(&spec, 8), &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn identical_snapshots_get_uniform_weights() {
    let p = policy(3);
    let pols = vec![p.clone(), p.clone(), p.clone(), p];
    let space = EnvId::GridWorld.make().spec().action_space.clone();
    let cfg = SelectionConfig { m: 2, ..Default::default() };
    let (_, report) = select_policies(&pols, &gridworld_log(4), &space, &cfg).unwrap();
    for w in &report.w {
        assert!((w - 0.25).abs() <= 1e-9, "{:?}", report.w);
    }
    assert_eq!(report.chosen, vec![0, 1]);
    assert!(report.diversity.iter().all(|&x| x == 0.0));
}

#[test]
fn choosing_every_policy_returns_all_of_them() {
    let pols: Vec<PolicyParams> = (0..3).map(policy).collect();
    let space = EnvId::GridWorld.make().spec().action_space.clone();
    let cfg = SelectionConfig { m: 3, ..Default::default() };
    let (_, report) = select_policies(&pols, &gridworld_log(3), &space, &cfg).unwrap();
    assert_eq!(report.chosen, vec![0, 1, 2]);
    assert!((report.w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    let d = &report.diversity;
    for i in 0..3 {
        assert_eq!(d[(i, i)], 0.0);
        for k in 0..3 {
            assert!(d[(i, k)] >= 0.0);
        }
    }
}

#[test]
fn written_artefacts_reproduce_the_selection() {
    for (env, strategy, mode) in [
        ("gridworld", "majority", Mode::Seerl),
        ("pointmass2d", "average", Mode::Seerl),
        ("cartpole-lite", "majority", Mode::Independent),
    ] {
        let cfg = ExperimentConfig::from_text(&format!(
            "env = {env}\nstrategy = {strategy}\nmode = {mode}\nT = 1500\nM = 3\nm = 2\nalpha0 = 0.01\nepisodes = 2\n"
        ))
        .unwrap();
        let result = run_experiment(&cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_experiment(dir.path(), &result).unwrap();

        let run = load_training(dir.path(), &cfg, 9).unwrap();
        assert_eq!(run.snapshots, result.training.snapshots, "{env}");
        assert_eq!(run.log.records(), result.training.log.records(), "{env}");
        assert_eq!(run.env_steps, result.training.env_steps, "{env}");
        assert_eq!(load_selection(dir.path(), &run.run_id).unwrap(), result.selection, "{env}");
        let (_, again) = run_selection(&cfg, 9, &run.snapshots, &run.log).unwrap();
        assert_eq!(again, result.selection, "{env}");
    }
}

#[test]
fn strategy_must_fit_the_action_space() {
    let err = ExperimentConfig::from_text("env = pointmass2d\nstrategy = majority\n").unwrap_err();
    assert_eq!(err.kind(), "StrategySpaceMismatch");
    let err = ExperimentConfig::from_text("env = gridworld\nstrategy = dbs\n").unwrap_err();
    assert_eq!(err.kind(), "StrategySpaceMismatch");
}

#[test]
fn every_mode_accounts_for_its_samples() {
    for mode in Mode::ALL {
        let mut cfg = ExperimentConfig::from_text("T = 1000\nM = 4\nm = 2\nepisodes = 1\n").unwrap();
        cfg.mode = mode;
        let r = run_experiment(&cfg, 1).unwrap();
        let want = if mode == Mode::Independent { 4000 } else { 1000 };
        assert_eq!(r.training.env_steps, want, "{mode}");
        assert_eq!(r.training.log.len() as u64, want, "{mode}");
        assert_eq!(r.training.snapshots.len(), 4, "{mode}");
        let cycles: Vec<u64> = r.training.snapshots.iter().map(|s| s.meta.cycle_index).collect();
        assert_eq!(cycles, vec![1, 2, 3, 4], "{mode}");
    }
}
