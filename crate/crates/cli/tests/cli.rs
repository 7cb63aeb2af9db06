use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn seerl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seerl")).args(args).output().expect("spawn seerl")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_run(out: &Path) -> Vec<String> {
    ["--T", "2000", "--M", "3", "--m", "2", "--episodes", "3", "--seed", "4", "--out", out.to_str().unwrap()]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[test]
fn staged_commands_match_single_run() {
    let staged = tempfile::tempdir().unwrap();
    let single = tempfile::tempdir().unwrap();
    let args = small_run(staged.path());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    for cmd in ["train", "select", "evaluate"] {
        let o = seerl(&[&[cmd], args.as_slice()].concat());
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let args2 = small_run(single.path());
    let args2: Vec<&str> = args2.iter().map(String::as_str).collect();
    let o = seerl(&[&["run"], args2.as_slice()].concat());
    assert!(o.status.success(), "{}", stderr(&o));

    for name in [
        "seerl-gridworld-s4.log",
        "seerl-gridworld-s4_cycle3.snap",
        "seerl-gridworld-s4.selection.txt",
        "seerl-gridworld-s4.summary.txt",
        "seerl-gridworld-s4.eval.csv",
    ] {
        let a = fs::read(staged.path().join(name)).unwrap();
        let b = fs::read(single.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between staged and single-pass runs");
    }

    let o = seerl(&["report", "--out", single.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(single.path().join("report.txt")).unwrap();
    assert!(report.lines().nth(1).unwrap().starts_with("gridworld seerl majority 1 "), "{report}");
}

#[test]
fn errors_are_machine_readable() {
    let o = seerl(&["train", "--env", "pointmass2d", "--strategy", "majority"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error kind=StrategySpaceMismatch message="), "{}", stderr(&o));

    let o = seerl(&["train", "--m", "6", "--M", "5"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error kind=Config "), "{}", stderr(&o));

    let empty = tempfile::tempdir().unwrap();
    let o = seerl(&["select", "--out", empty.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error kind=Snapshot "), "{}", stderr(&o));
}

#[test]
fn ablation_writes_one_row_per_point_and_seed() {
    let out = tempfile::tempdir().unwrap();
    let conf = out.path().join("small.conf");
    fs::write(&conf, "T = 600\nM = 3\nm = 1\nepisodes = 2\nseeds = 0,1\n").unwrap();
    let o = seerl(&[
        "ablate",
        "--config",
        conf.to_str().unwrap(),
        "--sweep",
        "M=2,3",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.path().join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");
    assert!(out.path().join("M=3").join("seerl-gridworld-s1.summary.txt").exists());
}
