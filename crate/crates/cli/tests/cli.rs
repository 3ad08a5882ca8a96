use std::path::Path;
use std::process::{Command, Output};

fn tdlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdlab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, body: &str) -> String {
    std::fs::copy(configs().join("domains/unit_square.json"), dir.join("square.json")).unwrap();
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_grid_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario = \"project\"\ndomain = \"square.json\"\n");
    let out = tdlab(&["project", "--config", &cfg], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid"), "{err}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "domain = \"square.json\"\ngrid = 16\ngird = 16\n");
    let out = tdlab(&["project", "--config", &cfg], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gird"), "{err}");
}

#[test]
fn unknown_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "domain = \"square.json\"\ngrid = 16\n");
    let out = tdlab(&["teleport", "--config", &cfg], dir.path());
    assert!(!out.status.success());
}

#[test]
fn too_coarse_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "domain = \"square.json\"\ngrid = 4\n");
    let out = tdlab(&["project", "--config", &cfg], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));
}

#[test]
fn project_run_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "domain = \"square.json\"\ngrid = 16\nseed = 3\n");
    let out = tdlab(
        &["project", "--config", &cfg, "--out", "run", "--deterministic"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["scenario"], "project");
    assert_eq!(report["deterministic"], true);
    let mass_error = report["metrics"]["mass_error"].as_f64().unwrap();
    assert!(mass_error <= 1e-12);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let files: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["file"].as_str().unwrap())
        .collect();
    assert!(files.contains(&"report.json"));
    for f in files {
        assert!(run.join(f).exists(), "{f}");
    }
}

#[test]
fn worker_override_must_be_a_positive_integer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "domain = \"square.json\"\ngrid = 16\nseed = 3\n");
    let out = Command::new(env!("CARGO_BIN_EXE_tdlab"))
        .args(["project", "--config", &cfg, "--out", "run"])
        .env("TDLAB_WORKERS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("TDLAB_WORKERS"));
}
