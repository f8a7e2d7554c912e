use std::path::Path;
use std::process::{Command, Output};

fn gbsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gbsde")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gheat_with_defaults_passes_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gbsde(&["gheat", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["report.json", "gheat.csv", "solution/header.json", "solution/u.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "gheat");
    assert_eq!(report["pass"], true);
}

#[test]
fn unknown_field_is_a_configuration_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"schema_version": 1, "band": {"sigma_lo": 0.5, "sigma_hi": 1.0}, "scenarios": {"pathz": 3}}"#,
    );
    let o = gbsde(&["solve", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("scenarios.pathz") || err.contains("scenarios: unknown field `pathz`"), "{err}");
}

#[test]
fn semantic_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("inverted.json", r#"{"schema_version": 1, "band": {"sigma_lo": 1.5, "sigma_hi": 1.0}}"#),
        ("version.json", r#"{"schema_version": 99, "band": {"sigma_lo": 0.5, "sigma_hi": 1.0}}"#),
        ("syntax.json", r#"{"schema_version": 1, "band": "#),
        (
            "fine.json",
            r#"{"schema_version": 1, "band": {"sigma_lo": 0.5, "sigma_hi": 1.0},
                "approx": {"horizon": 1.0, "pipeline": {"levels": [2, 3]}}}"#,
        ),
    ];
    for (name, body) in cases {
        let cfg = write(dir.path(), name, body);
        let cmd = if name == "fine.json" { "approx" } else { "solve" };
        let o = gbsde(&[cmd, "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
    }
    let o = gbsde(&["solve", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn simulate_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.json",
        r#"{"schema_version": 1, "band": {"sigma_lo": 0.5, "sigma_hi": 1.0},
            "scenarios": {"dt": 0.0625, "paths": 3, "family": "extremes"}}"#,
    );
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = gbsde(&["simulate", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read_to_string(out.join("scenarios.csv")).unwrap()
    };
    let (a, b, c) = (run("a", "7"), run("b", "7"), run("c", "8"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.starts_with("scenario,t,B,qv,sigma\n"));
}
