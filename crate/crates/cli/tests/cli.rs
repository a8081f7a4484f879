use std::path::Path;
use std::process::{Command, Output};

fn usvf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_usvf"))
        .args(args)
        .current_dir(cwd)
        .env_remove("USVF_OUT_DIR")
        .output()
        .expect("usvf runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Default scenario shortened to `horizon` seconds, written as `name`.
fn short_scenario(dir: &Path, name: &str, horizon: f64) -> String {
    let o = usvf(&["init", name], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    let text = text.replace("horizon = 60.0", &format!("horizon = {horizon:?}"));
    std::fs::write(&path, text).unwrap();
    name.to_string()
}

#[test]
fn init_writes_the_default_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = usvf(&["init"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("name = \"pond-4-ring\""));
    assert!(text.contains("[[-25.87, -25.87], [-17.71, -17.71], [26.33, 26.33], [17.26, 17.26]]"));
}

#[test]
fn certify_prints_constants() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_scenario(dir.path(), "s.toml", 1.0);
    let o = usvf(&["certify", &s], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("rho = 0.6666666666666666"), "{text}");
    assert_eq!(text.matches("c1 = 0.5652941176470588").count(), 4, "{text}");
    assert!(text.contains("radius = 0.00145697932782"), "{text}");
}

#[test]
fn plan_exports_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_scenario(dir.path(), "s.toml", 1.0);
    let o = usvf(&["plan", &s, "--out", "results"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("results/plan.csv")).unwrap();
    assert!(csv.starts_with("t,Q1x,Q1y,Q2x"));
    assert_eq!(csv.lines().count(), 1 + 101);
    let manifest = std::fs::read_to_string(dir.path().join("results/plan.manifest.json")).unwrap();
    assert!(manifest.contains("\"data_file\": \"plan.csv\""));
    assert!(manifest.contains("\"decay_rate\""));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_scenario(dir.path(), "s.toml", 0.5);
    let env_out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_usvf"))
        .args(["plan", &s])
        .current_dir(dir.path())
        .env("USVF_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_out.join("plan.csv").exists());

    let o = Command::new(env!("CARGO_BIN_EXE_usvf"))
        .args(["plan", &s, "--out", "flag"])
        .current_dir(dir.path())
        .env("USVF_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("flag/plan.csv").exists());
}

#[test]
fn track_exports_vessel_columns() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_scenario(dir.path(), "s.toml", 0.5);
    let o = usvf(&["--exec", "sequential", "track", &s, "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let header = std::fs::read_to_string(dir.path().join("o/track.csv")).unwrap();
    let header = header.lines().next().unwrap().to_string();
    for col in ["x1", "psi4", "eb1_1", "F3_2"] {
        assert!(header.split(',').any(|c| c == col), "{col} missing from {header}");
    }
}

#[test]
fn full_writes_both_traces_and_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_scenario(dir.path(), "s.toml", 0.5);
    let o = usvf(&["full", &s, "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["plan.csv", "track.csv", "certificates.json"] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
}

#[test]
fn privacy_audit_passes_for_a_neutral_target() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_scenario(dir.path(), "s.toml", 2.0);
    let o = usvf(
        &["privacy-audit", &s, "--target", "1", "--dq", "5,-3", "--out", "a"],
        dir.path(),
    );
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("privacy audit: PASS"));
    let report = std::fs::read_to_string(dir.path().join("a/audit.json")).unwrap();
    assert!(report.contains("\"pass\": true"));
    assert!(dir.path().join("a/audit_shadow.csv").exists());
}

#[test]
fn privacy_audit_rejects_adversary_target() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_scenario(dir.path(), "s.toml", 1.0);
    let o = usvf(&["privacy-audit", &s, "--target", "3", "--dq", "1,1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("adversary member"), "{}", stderr(&o));

    let o = usvf(&["privacy-audit", &s, "--target", "9", "--dq", "1,1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_arguments_and_scenarios_fail() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_scenario(dir.path(), "s.toml", 1.0);
    let o = usvf(&["privacy-audit", &s, "--target", "1", "--dq", "5"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(dir.path().join(&s)).unwrap();
    std::fs::write(&bad, text.replace("[planner]", "[planner]\nspeed = 3.0")).unwrap();
    let o = usvf(&["plan", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("speed"), "{}", stderr(&o));

    let o = usvf(&["certify", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.toml"));
}
