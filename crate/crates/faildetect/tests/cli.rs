use std::path::Path;
use std::process::{Command, Output};

fn faildetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faildetect")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_toy_writes_report_and_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&faildetect(&["simulate-toy", "--seed", "0", "--out", path(dir.path())]));
    assert_eq!(v["roc_auc_model1"], v["roc_auc_model2"]);
    assert!(v["ece_model1"].as_f64().unwrap() <= 0.03);
    for f in ["toy_report.json", "toy_histogram_model1.csv", "toy_histogram_model2.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let hist = std::fs::read_to_string(dir.path().join("toy_histogram_model2.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("lower,upper,correct,incorrect"));
    assert_eq!(hist.lines().count(), 21);
}

#[test]
fn generate_then_run_produces_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("synth.json");
    std::fs::write(&synth, r#"{"n_train": 300, "n_val": 200, "n_test": 200, "n_seeds": 2}"#).unwrap();
    let data = dir.path().join("data");
    stdout_json(&faildetect(&["generate-synthetic", "--config", path(&synth), "--out", path(&data)]));
    let config = data.join("run_config.json");
    let out = dir.path().join("out");
    let v = stdout_json(&faildetect(&[
        "run",
        "--config",
        path(&config),
        "--out",
        path(&out),
        "--scores",
        "msp,doctor,trustscore",
    ]));
    assert_eq!(v["reports"], 6);
    assert_eq!(v["skipped"], serde_json::json!([]));
    for f in ["results.json", "results.csv", "risk_coverage/doctor.csv", "scores/trustscore_seed1.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let again = dir.path().join("again");
    stdout_json(&faildetect(&["report", "--results", path(&out.join("results.json")), "--out", path(&again)]));
    assert_eq!(
        std::fs::read(out.join("results.csv")).unwrap(),
        std::fs::read(again.join("results.csv")).unwrap()
    );
}

#[test]
fn score_and_evaluate_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("synth.json");
    std::fs::write(&synth, r#"{"n_train": 200, "n_val": 200, "n_test": 150, "n_seeds": 1}"#).unwrap();
    stdout_json(&faildetect(&["generate-synthetic", "--config", path(&synth), "--out", path(dir.path())]));
    let config = dir.path().join("run_config.json");

    let scored = dir.path().join("scored");
    stdout_json(&faildetect(&["score", "--config", path(&config), "--out", path(&scored), "--scores", "mc-msp"]));
    let csv = std::fs::read_to_string(scored.join("scores/mc-msp_seed0.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("sample_index,score,predicted_class,label,correct"));
    assert_eq!(csv.lines().count(), 151);

    let evaluated = dir.path().join("evaluated");
    let v = stdout_json(&faildetect(&["evaluate", "--config", path(&config), "--out", path(&evaluated), "--scores", "msp"]));
    assert_eq!(v["skipped"], 0);
    assert!(evaluated.join("results.json").exists());
}

#[test]
fn errors_are_json_on_stderr_with_failure_status() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = faildetect(&["run", "--config", path(&missing), "--out", path(dir.path())]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "io");
    assert!(v["message"].as_str().unwrap().contains("nope.json"));
}

#[test]
fn strict_run_reports_skips() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("synth.json");
    std::fs::write(&synth, r#"{"n_train": 200, "n_val": 100, "n_test": 100, "n_seeds": 1}"#).unwrap();
    stdout_json(&faildetect(&["generate-synthetic", "--config", path(&synth), "--out", path(dir.path())]));
    let config = dir.path().join("run_config.json");
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&config).unwrap()).unwrap();
    v["seeds"][0].as_object_mut().unwrap().remove("val");
    std::fs::write(&config, serde_json::to_vec(&v).unwrap()).unwrap();

    let out = faildetect(&["run", "--config", path(&config), "--out", path(dir.path()), "--scores", "msp,confidnet", "--strict"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["skipped"][0]["score_name"], "confidnet");

    let lenient = stdout_json(&faildetect(&["run", "--config", path(&config), "--out", path(dir.path()), "--scores", "msp,confidnet"]));
    assert_eq!(lenient["reports"], 1);
    assert_eq!(lenient["skipped"][0]["score_name"], "confidnet");
}

#[test]
fn unknown_score_is_rejected_by_the_parser() {
    let out = faildetect(&["run", "--config", "x.json", "--scores", "msp,bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
