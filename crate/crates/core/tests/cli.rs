use std::process::Command;

fn exag() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exag"))
}

#[test]
fn missing_catalog_exits_with_config_error() {
    let out = exag().args(["buildpool", "--catalog", "/nonexistent/pool"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = exag()
        .args(["serve", "--port", "0"])
        .env("EXAG_CATALOG", "/nonexistent/pool")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn buildpool_simulate_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("pool");
    let out = exag()
        .args(["buildpool", "--images", "120", "--probes", "10", "--format", "text", "--out"])
        .arg(&pool)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(pool.join("manifest.json").exists() && pool.join("features.txt").exists());

    let logs = dir.path().join("logs.jsonl");
    let out = exag()
        .args(["simulate", "--games", "6", "--seed", "2", "--accuracy", "0.8", "--catalog"])
        .arg(&pool)
        .arg("--out")
        .arg(&logs)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("6 games"));
    let params: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("logs.jsonl.params.json")).unwrap()).unwrap();
    assert_eq!(params["games"], 6);

    for report in ["helpfulness", "correctness", "noisy-answers"] {
        let out = exag().args(["analyze", "--json", "--report", report, "--logs"]).arg(&logs).output().unwrap();
        assert!(out.status.success(), "{report}: {}", String::from_utf8_lossy(&out.stderr));
        let _: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    }
    let out = exag()
        .args(["analyze", "--report", "difficulty", "--catalog"])
        .arg(&pool)
        .arg("--logs")
        .arg(&logs)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn analyze_reproduces_the_pilot_table() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/table1_pilot.jsonl");
    let out = exag().args(["analyze", "--report", "table1", "--logs", fixture]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("43.20") && text.contains("47.77") && text.contains("28.57"), "{text}");
}
