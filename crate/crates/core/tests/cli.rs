use std::path::Path;
use std::process::{Command, Output};

use adahessian::harness::{RunSummary, Trajectory, VerifyReport};

fn cli(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adahessian"))
        .args(args)
        .env("ADAHESSIAN_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn run_writes_trajectory_sidecar_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(
        &["run", "--problem", "logreg", "--iters", "20", "--batch-size", "32"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: RunSummary = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary.completed, 20);

    let traj_path = dir.path().join("logreg-adahessian-s0.jsonl");
    let traj = Trajectory::load(&traj_path).unwrap();
    assert_eq!(traj.records.len(), 20);
    assert!(dir.path().join("logreg-adahessian-s0.jsonl.timing").exists());
    assert!(dir.path().join("logreg-adahessian-s0.summary.json").exists());

    let r = cli(&["report", traj_path.to_str().unwrap()], dir.path());
    assert_eq!(code(&r), 0);
    let again: RunSummary = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(again, summary);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"
version = 1

[problem]
name = "spd-quadratic"
dim = 6

[optimizer]
kind = "adam"
lr = 0.05

[run]
iterations = 30
seed = 4
out = "custom.jsonl"
"#,
    )
    .unwrap();
    let o = cli(&["run", "--config", cfg.to_str().unwrap(), "--iters", "12"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traj = Trajectory::load(&dir.path().join("custom.jsonl")).unwrap();
    assert_eq!(traj.header.optimizer, "adam");
    assert_eq!(traj.header.dim, 6);
    assert_eq!(traj.records.len(), 12);
    assert_eq!(traj.header.config.run.seed, 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let numeric = cli(
        &["run", "--optimizer", "sgd", "--lr", "50", "--iters", "300"],
        dir.path(),
    );
    assert_eq!(code(&numeric), 2);
    let summary: RunSummary = serde_json::from_slice(&numeric.stdout).unwrap();
    assert!(summary.completed < 300 && summary.completed > 0);

    assert_eq!(code(&cli(&["run", "--iters", "0"], dir.path())), 1);
    assert_eq!(code(&cli(&["run", "--problem", "nope"], dir.path())), 1);
    assert_eq!(code(&cli(&["run", "--unknown-flag"], dir.path())), 1);
    assert_eq!(code(&cli(&["run", "--config", "/does/not/exist.toml"], dir.path())), 1);
    assert_eq!(code(&cli(&["sweep", "--preset", "nope"], dir.path())), 1);
    assert_eq!(code(&cli(&["report", "/does/not/exist.jsonl"], dir.path())), 1);
    assert_eq!(code(&cli(&["--help"], dir.path())), 0);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[optimizer]\nlearning_rate = 1.0\n").unwrap();
    assert_eq!(code(&cli(&["run", "--config", bad.to_str().unwrap()], dir.path())), 1);
}

#[test]
fn sweep_from_config_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        r#"
seeds = [0, 1]

[base.problem]
name = "logreg"
samples = 128

[base.run]
iterations = 15
timing_reference = false

[grid]
optimizers = ["adahessian", "sgd"]
lr_multipliers = [1.0, 4.0]

[base_lr]
adahessian = 0.1
sgd = 0.05
"#,
    )
    .unwrap();
    let csv = dir.path().join("out/table.csv");
    let traj = dir.path().join("traj");
    let o = cli(
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            csv.to_str().unwrap(),
            "--trajectories",
            traj.to_str().unwrap(),
            "--jobs",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("optimizer,lr,lr_multiplier"));
    assert!(lines[1].starts_with("adahessian,0.1,1,"));
    assert_eq!(
        std::fs::read_dir(&traj)
            .unwrap()
            .filter(|e| { e.as_ref().unwrap().path().extension().is_some_and(|x| x == "jsonl") })
            .count(),
        8
    );
}

#[test]
fn verify_writes_report_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    let o = cli(&["verify", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: VerifyReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report.passed);
    assert!(report.properties.len() >= 10);
    assert!(String::from_utf8_lossy(&o.stderr)
        .lines()
        .all(|l| l.starts_with("PASS")));
}
