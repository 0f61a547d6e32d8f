//! Exit codes and file outputs of the `distill` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn distill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distill")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs debate + extract on the fixtures into `dir`.
fn debate_and_extract(dir: &Path) {
    let mock = data("mock.json");
    let problems = data("problems.jsonl");
    let logs = dir.join("logs.jsonl");
    let out = distill(&["--mock-script", s(&mock), "debate", "--problems", s(&problems), "--out", s(&logs)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let traj = dir.join("traj.jsonl");
    let out = distill(&[
        "--mock-script",
        s(&mock),
        "extract",
        "--logs",
        s(&logs),
        "--problems",
        s(&problems),
        "--out",
        s(&traj),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&distill(&["--help"])), 0);
    assert_eq!(code(&distill(&["--version"])), 0);
}

#[test]
fn missing_required_flag_is_a_config_error() {
    assert_eq!(code(&distill(&["debate", "--out", "x.jsonl"])), 2);
    assert_eq!(code(&distill(&["no-such-command"])), 2);
}

#[test]
fn invalid_debate_size_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = distill(&[
        "--mock-script",
        s(&data("mock.json")),
        "debate",
        "--problems",
        s(&data("problems.jsonl")),
        "--out",
        s(&dir.path().join("logs.jsonl")),
        "--n-agents",
        "1",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[debate]\nn_agent = 4\n").unwrap();
    let out = distill(&[
        "--config",
        s(&cfg),
        "--mock-script",
        s(&data("mock.json")),
        "debate",
        "--problems",
        s(&data("problems.jsonl")),
        "--out",
        s(&dir.path().join("logs.jsonl")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_agent"));
}

#[test]
fn config_file_overrides_defaults_and_flags_override_both() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[debate]\nmax_rounds = 2\ntemperature = 0.3\n").unwrap();
    let out = distill(&[
        "--config",
        s(&cfg),
        "--mock-script",
        s(&data("mock.json")),
        "debate",
        "--problems",
        s(&data("problems.jsonl")),
        "--out",
        s(&dir.path().join("logs.jsonl")),
        "--rounds",
        "3",
    ]);
    assert_eq!(code(&out), 0);
    let snapshot = fs::read_to_string(dir.path().join("debate.resolved-config.toml")).unwrap();
    let resolved: toml::Table = snapshot.parse().unwrap();
    assert_eq!(resolved["debate"]["max_rounds"].as_integer(), Some(3));
    assert_eq!(resolved["debate"]["temperature"].as_float(), Some(0.3));
    assert_eq!(resolved["debate"]["n_agents"].as_integer(), Some(5));
}

#[test]
fn full_mock_pipeline_writes_expected_artifacts() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    debate_and_extract(d);
    assert_eq!(lines(&d.join("logs.jsonl")), 4);
    assert_eq!(lines(&d.join("traj.verdicts.jsonl")), 4);
    assert_eq!(lines(&d.join("traj.jsonl")), 7);
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("traj.stats.json")).unwrap()).unwrap();
    assert!(stats.to_string().contains("gsm8k"));

    let run = |args: &[&str]| {
        let out = distill(args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["build-rsft", "--in", s(&d.join("traj.jsonl")), "--out", s(&d.join("rsft.jsonl"))]);
    assert_eq!(lines(&d.join("rsft.jsonl")), 7);
    run(&["build-aug", "--in", s(&d.join("traj.jsonl")), "--out", s(&d.join("aug.jsonl")), "--k", "2"]);
    assert_eq!(lines(&d.join("aug.jsonl")), 3);
    run(&[
        "build-prm-pairs",
        "--in",
        s(&d.join("logs.jsonl")),
        "--verdicts",
        s(&d.join("traj.verdicts.jsonl")),
        "--out",
        s(&d.join("pairs.jsonl")),
    ]);
    assert!(lines(&d.join("pairs.jsonl")) > 0);
    run(&["train-prm", "--pairs", s(&d.join("pairs.jsonl")), "--out", s(&d.join("prm.json"))]);
    let csv = fs::read_to_string(d.join("prm.loss.csv")).unwrap();
    assert!(csv.starts_with("step,stage,loss\n"));
    run(&[
        "train-policy",
        "--reward",
        "prm",
        "--prm",
        s(&d.join("prm.json")),
        "--pairs",
        s(&d.join("pairs.jsonl")),
        "--out",
        s(&d.join("policy.json")),
        "--steps",
        "20",
    ]);
    assert!(fs::read_to_string(d.join("policy.metrics.csv"))
        .unwrap()
        .starts_with("step,mean_reward,kl,clip_fraction,objective\n"));

    let out = run(&[
        "eval",
        "--mode",
        "accuracy",
        "--problems",
        s(&data("problems.jsonl")),
        "--from-logs",
        s(&d.join("logs.jsonl")),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["total"], 4);
}

#[test]
fn all_debates_aborted_is_a_transport_error() {
    let dir = TempDir::new().unwrap();
    let script = dir.path().join("down.json");
    fs::write(&script, r#"{"fallback": {"status": 503}}"#).unwrap();
    let logs = dir.path().join("logs.jsonl");
    let out =
        distill(&["--mock-script", s(&script), "debate", "--problems", s(&data("problems.jsonl")), "--out", s(&logs)]);
    assert_eq!(code(&out), 3);
    assert_eq!(lines(&logs), 4);
    assert!(fs::read_to_string(&logs).unwrap().lines().all(|l| l.contains("\"aborted\":\"round 1")));
}

#[test]
fn empty_problem_file_is_empty_input() {
    let dir = TempDir::new().unwrap();
    let problems = dir.path().join("none.jsonl");
    fs::write(&problems, "").unwrap();
    let out = distill(&[
        "--mock-script",
        s(&data("mock.json")),
        "debate",
        "--problems",
        s(&problems),
        "--out",
        s(&dir.path().join("logs.jsonl")),
    ]);
    assert_eq!(code(&out), 5);
}

#[test]
fn strict_mode_fails_on_empty_output() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    debate_and_extract(d);
    // Keep only the excluded problem, so nothing survives extraction.
    let logs = fs::read_to_string(d.join("logs.jsonl")).unwrap();
    let only: String = logs.lines().filter(|l| l.contains("gsm-004")).map(|l| format!("{l}\n")).collect();
    fs::write(d.join("one.jsonl"), only).unwrap();
    let (mock, problems) = (data("mock.json"), data("problems.jsonl"));
    let (one, t) = (d.join("one.jsonl"), d.join("t.jsonl"));
    let tail = ["extract", "--logs", s(&one), "--problems", s(&problems), "--out", s(&t)];
    assert_eq!(code(&distill(&[&["--mock-script", s(&mock)][..], &tail].concat())), 0);
    assert_eq!(code(&distill(&[&["--mock-script", s(&mock), "--strict"][..], &tail].concat())), 5);
}

#[test]
fn schema_violations_exit_four() {
    let dir = TempDir::new().unwrap();
    let extra = dir.path().join("extra.jsonl");
    let mut text = fs::read_to_string(data("problems.jsonl")).unwrap();
    text = text.replacen("\"source_dataset\"", "\"difficulty\":\"easy\",\"source_dataset\"", 1);
    fs::write(&extra, &text).unwrap();
    let logs = dir.path().join("logs.jsonl");
    let mock = data("mock.json");
    let base = ["--mock-script", s(&mock)];
    let cmd = ["debate", "--problems", s(&extra), "--out", s(&logs)];
    assert_eq!(code(&distill(&[&base[..], &["--strict"], &cmd].concat())), 4);
    assert_eq!(code(&distill(&[&base[..], &cmd].concat())), 0);

    let broken = dir.path().join("broken.jsonl");
    fs::write(&broken, "{\"id\": \"a\",\n").unwrap();
    let out = distill(&[&base[..], &["debate", "--problems", s(&broken), "--out", s(&logs)]].concat());
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte 0"));
}

#[test]
fn diverging_training_exits_six() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    debate_and_extract(d);
    let out = distill(&[
        "build-prm-pairs",
        "--in",
        s(&d.join("logs.jsonl")),
        "--verdicts",
        s(&d.join("traj.verdicts.jsonl")),
        "--out",
        s(&d.join("pairs.jsonl")),
    ]);
    assert_eq!(code(&out), 0);
    let out =
        distill(&["train-prm", "--pairs", s(&d.join("pairs.jsonl")), "--out", s(&d.join("prm.json")), "--lr", "1e300"]);
    assert_eq!(code(&out), 6);
    assert!(!d.join("prm.json").exists());
}

#[test]
fn http_mode_without_api_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_distill"))
        .env_remove("OPENAI_API_KEY")
        .args(["debate", "--problems", s(&data("problems.jsonl")), "--out", s(&dir.path().join("l.jsonl"))])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    debate_and_extract(a.path());
    debate_and_extract(b.path());
    for name in ["logs.jsonl", "traj.jsonl", "traj.verdicts.jsonl", "traj.stats.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}
