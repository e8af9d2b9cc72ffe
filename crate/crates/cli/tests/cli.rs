use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pzflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pzflow")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("json error on stderr");
    v["error"].as_str().unwrap().to_string()
}

#[test]
fn homogenize_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cell.json", r#"{"resolution": 16}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let out = pzflow(&["homogenize", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["coefficients.json", "checks.json", "correctors.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "homogenize");
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);
    let coeffs: serde_json::Value = serde_json::from_slice(&fs::read(a.join("coefficients.json")).unwrap()).unwrap();
    assert_eq!(coeffs["h"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_material_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cell.json", r#"{"resolution": 16, "materials": "nowhere.json"}"#);
    let out = pzflow(&["homogenize", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "MissingMaterial");
}

#[test]
fn missing_config_is_a_config_error() {
    let out = pzflow(&["homogenize", "--config", "/nonexistent/cell.json", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonpositive_time_step_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_slice(&fs::read(configs().join("pumping.json")).unwrap()).unwrap();
    cfg["dt"] = serde_json::json!(0.0);
    let path = write(tmp.path(), "run.json", &cfg.to_string());
    let out = pzflow(&["simulate", "--config", &path, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "InvalidConfig");
}

#[test]
fn simulate_writes_both_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("pumping.json");
    for mode in ["linear", "semilinear"] {
        let dir = tmp.path().join(mode);
        let out = pzflow(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--mode", mode]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["mode"], mode);
        assert_eq!(summary["steps"], 50);
        let fluxes = fs::read_to_string(dir.join("fluxes.csv")).unwrap();
        assert!(fluxes.lines().nth(1).unwrap().starts_with("t,Q_minus,Q_mid,Q_plus"));
        assert_eq!(fluxes.lines().count(), 2 + 51);
        assert!(dir.join("fields_50.csv").exists());
        assert!(dir.join("coefficients_1d.json").exists());
    }
}

#[test]
fn explicit_coefficients_skip_the_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "length": 0.1, "nodes": 21, "steps": 5, "p_right": 10.0, "mode": "linear",
        "wave": {"kind": "case_table", "phi_star": 1e4, "b1": 100.0, "b2": 0.0, "c": 30.0, "d": 0.0},
        "coefficients": {
            "a": {"value": 1e9}, "b": {"value": 0.3}, "m": {"value": 1e-9},
            "h": {"value": 1e-3}, "z": {"value": 1e-11}, "kappa": {"value": 1e-13}
        }
    }"#;
    let path = write(tmp.path(), "run.json", cfg);
    let out = pzflow(&["simulate", "--config", &path, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn generated_mesh_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("m");
    let out = pzflow(&["mesh", "generate", "--config", configs().join("mesh.json").to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let out = pzflow(&["mesh", "validate", "--mesh", dir.join("mesh.json").to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["valid"], true);
    assert_eq!(report["conductors"], 2);
}

#[test]
fn corrupt_mesh_reports_its_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write(tmp.path(), "mesh.json", r#"{"dimension": 3, "nodes": [], "elements": [], "facets": [], "periodic_pairs": []}"#);
    let out = pzflow(&["mesh", "validate", "--mesh", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "SchemaError");
}

#[test]
fn audit_without_sweep_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "audit.json", r#"{"resolution": 16, "geometry": {"channel_halfwidth": 0.125, "bulge": 0.4, "piezo_halfwidth": 0.375, "electrodes": [{"min": [0.25, 0.1875], "max": [0.75, 0.25]}, {"min": [0.25, 0.75], "max": [0.75, 0.8125]}]}, "random_fields": 1}"#);
    let dir = tmp.path().join("a");
    let out = pzflow(&["audit", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("audit.csv")).unwrap();
    assert!(csv.starts_with("coefficient,formula_value,fd_value,rel_error\n"));
    assert!(!dir.join("sweep.csv").exists());
}
