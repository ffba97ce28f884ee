use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn crashsev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crashsev")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn write_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "data_path": fixture("synthetic_crashes.csv"),
        "output_dir": "out",
        "seed": 3,
        "models": [{"model_id": "mock-a"}, {"model_id": "mock-b"}],
        "parallelism": 2
    });
    let path = dir.join("experiment.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    std::fs::write(
        dir.join("mock.json"),
        r#"{"default": "Serious injury accident", "rules": [{"strategy": "ZS_PE", "response": "Minor or non-injury accident"}]}"#,
    )
    .unwrap();
    path
}

#[test]
fn run_then_rescore_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let mock = dir.path().join("mock.json");
    let o = crashsev(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--mock",
        mock.to_str().unwrap(),
        "--strategies",
        "ZS,ZS_PE",
        "--models",
        "mock-b",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    assert!(table.starts_with("| Setting | Model |"));
    assert!(table.contains("| ZS | mock-b | 0.1667 | 0.3333 | 0.00 | 1.00 | 0.00 |"), "{table}");
    assert!(table.contains("| ZS_PE | mock-b |"));
    assert!(!table.contains("mock-a"));

    let out = dir.path().join("out");
    let transcript = out.join("transcript.jsonl");
    let o = crashsev(&["rescore", "--transcript", transcript.to_str().unwrap()]);
    assert!(o.status.success());
    let rescored: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let original: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("reports.json")).unwrap()).unwrap();
    assert_eq!(rescored, original);

    let o = crashsev(&["report", "--format", "md", "--reports", out.join("reports.json").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), std::fs::read_to_string(out.join("summary.md")).unwrap());

    let o = crashsev(&["report", "--format", "json", "--transcript", transcript.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap(), original);
}

#[test]
fn sample_emits_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sample.csv");
    let data = fixture("synthetic_crashes.csv");
    let args = ["sample", "--data", data.to_str().unwrap(), "--n", "50", "--seed", "12", "--csv", csv.to_str().unwrap()];
    let o = crashsev(&args);
    assert!(o.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let records = manifest["records"].as_array().unwrap();
    assert_eq!(records.len(), 150);
    for class in ["Fatal", "SeriousInjury", "MinorOrNonInjury"] {
        assert_eq!(records.iter().filter(|r| r["class"] == class).count(), 50);
    }
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 151);
    assert_eq!(crashsev(&args).stdout, o.stdout);
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("synthetic_crashes.csv");
    let o = crashsev(&["sample", "--data", data.to_str().unwrap(), "--n", "500", "--seed", "1"]);
    assert!(!o.status.success());
    assert_eq!(stderr_json(&o)["error"], "data");

    let missing = dir.path().join("nope.jsonl");
    let o = crashsev(&["rescore", "--transcript", missing.to_str().unwrap()]);
    assert_eq!(stderr_json(&o)["error"], "io");

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "not json\n").unwrap();
    let o = crashsev(&["rescore", "--transcript", bad.to_str().unwrap()]);
    assert_eq!(stderr_json(&o)["error"], "corrupt_transcript");

    let o = crashsev(&["run"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");

    let cfg = write_config(dir.path());
    let o = crashsev(&["run", "--config", cfg.to_str().unwrap(), "--strategies", "FS_CoT", "--mock", "x"]);
    assert_eq!(stderr_json(&o)["error"], "config");
    let o = crashsev(&["run", "--config", cfg.to_str().unwrap(), "--strategies", "XX"]);
    assert_eq!(stderr_json(&o)["error"], "usage");
}
