use std::fs;
use std::path::Path;
use std::process::Command;

const TINY: &str = "\
train_trajectories = 30
test_trajectories = 6
gp_max_points = 40
gp_restarts = 1
gp_iters = 30
forest_trees = 6
q_fit_trees = 4
rl_episodes = 2
rl_rollouts = 30
rl_trees = 4
ensemble = 3
occlusion_step = 25
";

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qpdf-traverse")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn pipeline(dir: &Path, config: &Path) {
    let d = dir.to_str().unwrap();
    let c = config.to_str().unwrap();
    ok(&["gen-data", "--config", c, "--out", d]);
    for m in ["forest", "gp-se", "gp-rq"] {
        ok(&["train", "--model", m, "--dir", d]);
    }
    ok(&["train-tte", "--dir", d]);
    ok(&["eval-occlusion", "--dir", d]);
    ok(&["eval-tte", "--dir", d]);
}

#[test]
fn the_full_pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("tiny.txt");
    fs::write(&config, TINY).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    pipeline(&a, &config);
    pipeline(&b, &config);
    for f in ["train-forest.csv", "train-gp-se.csv", "train-gp-rq.csv", "train-tte.csv", "occlusion.csv", "tte.csv"] {
        let x = fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty(), "{f}");
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
    }
    let occ = fs::read_to_string(a.join("occlusion.csv")).unwrap();
    assert!(occ.starts_with("method,x,success_rate,q25,q75\n"));

    let trace = ok(&["simulate", "--dir", a.to_str().unwrap(), "--state", "0", "--strategy", "rl"]);
    assert!(!trace.trim().is_empty());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.txt");
    fs::write(&config, "train_trajectoires = 3\n").unwrap();
    let out = run(&["gen-data", "--config", config.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train_trajectoires"));
}

#[test]
fn training_needs_generated_data() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["train", "--model", "forest", "--dir", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
}
