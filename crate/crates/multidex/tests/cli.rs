//! End-to-end checks of the command-line runner.

use std::process::Command;

use multidex::driver::RunConfig;
use multidex::gp::GpSettings;
use multidex::TaskId;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multidex"))
}

fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::desk_scale(TaskId::Pendulum, 5);
    cfg.bootstrap_episodes = 2;
    cfg.max_episodes = 3;
    cfg.nsga2.population_size = 8;
    cfg.nsga2.generations = 2;
    cfg.gp = GpSettings {
        opt_max_iters: 20,
        restarts: 0,
    };
    cfg.solved_threshold = None;
    cfg
}

#[test]
fn run_writes_csv_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string(&tiny_config()).unwrap()).unwrap();
    let out = dir.path().join("run1");
    let status = bin()
        .args([
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let csv = std::fs::read_to_string(out.join("trials.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "episode,selection,reward,best_reward,interaction_s,wall_s"
    );
    assert_eq!(lines.count(), 3);

    let echoed: RunConfig =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed.seed, 5);
    assert_eq!(echoed.max_episodes, 3);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string(&tiny_config()).unwrap()).unwrap();
    let out = dir.path().join("run2");
    let status = bin()
        .args([
            "--config",
            cfg_path.to_str().unwrap(),
            "--seed",
            "42",
            "--epsilon",
            "0.7",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let echoed: RunConfig =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed.seed, 42);
    assert_eq!(echoed.epsilon, 0.7);
}

#[test]
fn unknown_task_fails_with_name() {
    let out = bin()
        .args(["--task", "bogus", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus"), "stderr: {stderr}");
}

#[test]
fn missing_task_and_config_fails() {
    let out = bin().args(["--out", "/tmp/x"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("--task"));
}
