use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_secular3bp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn equilibrium_json(extra: &[&str]) -> Value {
    let mut args = vec!["equilibrium", "--json"];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn equilibrium_defaults() {
    let v = equilibrium_json(&[]);
    assert!((v["eccentricity"].as_f64().unwrap() - 0.041367).abs() < 1e-6);
    assert!((v["level"].as_f64().unwrap() - 1.002872548).abs() < 1e-9);
    let o = run(&["equilibrium"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("e*"));
}

#[test]
fn equilibrium_circular_perturber() {
    assert_eq!(equilibrium_json(&["--e-j", "0"])["eccentricity"].as_f64().unwrap(), 0.0);
}

#[test]
fn equilibrium_smaller_orbit() {
    let e = equilibrium_json(&["--a", "0.05"])["eccentricity"].as_f64().unwrap();
    assert!((e - 0.0206).abs() < 5e-5, "{e}");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["equilibrium", "--a", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["equilibrium", "--kernel", "bogus"]).status.code(), Some(2));
    assert_eq!(run(&["equilibrium", "--config", "/nonexistent/run.cfg"]).status.code(), Some(3));
    assert_eq!(run(&["portrait", "--level", "0.5"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    assert_eq!(run(&["figures", "--out-dir", out.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# smaller orbit\na = 0.05\ne_j = 0.3\n").unwrap();
    let v = equilibrium_json(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(v["a"].as_f64().unwrap(), 0.05);
    let v = equilibrium_json(&["--config", cfg.to_str().unwrap(), "--a", "0.1"]);
    assert_eq!(v["a"].as_f64().unwrap(), 0.1);
    std::fs::write(&cfg, "unknown = 1\n").unwrap();
    assert_eq!(run(&["equilibrium", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn figures_are_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("one"), dir.path().join("two"));
    for d in [&d1, &d2] {
        let o = run(&["figures", "--out-dir", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["fig2_levels.csv", "fig3.csv", "fig4.csv", "fig5.csv"] {
        let a = std::fs::read(d1.join(f)).unwrap();
        assert_eq!(a, std::fs::read(d2.join(f)).unwrap(), "{f} differs between runs");
        assert!(a.len() > 100, "{f} is empty");
    }

    let fig2 = std::fs::read_to_string(d1.join("fig2_levels.csv")).unwrap();
    let mut lines = fig2.lines();
    assert_eq!(lines.next(), Some("level,theta,e"));
    let mut levels: Vec<String> = Vec::new();
    for l in lines {
        let lv = l.split(',').next().unwrap().to_string();
        if levels.last() != Some(&lv) {
            levels.push(lv);
        }
    }
    assert_eq!(levels.len(), 8);

    let manifest = read_json(&d1.join("manifest.json"));
    let classes: Vec<&str> =
        manifest["levels"].as_array().unwrap().iter().map(|l| l["classification"].as_str().unwrap()).collect();
    assert_eq!(
        classes,
        [
            "equilibrium",
            "librating",
            "librating",
            "librating",
            "librating",
            "separatrix",
            "circulating",
            "circulating"
        ]
    );
    assert_eq!(manifest["config"]["a"].as_f64(), Some(0.1));
    assert_eq!(manifest["fig4"]["level_name"].as_str(), Some("R1"));
    assert_eq!(manifest["fig5"]["level_name"].as_str(), Some("R7"));

    let fig3 = std::fs::read_to_string(d1.join("fig3.csv")).unwrap();
    assert_eq!(fig3.lines().next(), Some("curve_id,p3,q3"));
    // Every float column carries 17 significant digits.
    let row = fig3.lines().nth(1).unwrap();
    let p3 = row.split(',').nth(1).unwrap();
    assert_eq!(p3.split('e').next().unwrap().trim_start_matches('-').len(), 18, "{p3}");
}

#[test]
fn stability_reports_and_hook() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["stability", "--out-dir", d, "--sweep-points", "500"]);
    assert!(o.status.success());
    let clean = read_json(&dir.path().join("stability_summary.json"));
    let base = clean["regimes"][0]["violations"].as_u64().unwrap();
    assert!(clean["regimes"][0]["min_det"].is_number());
    let csv = std::fs::read_to_string(dir.path().join("stability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 500);

    let o = run(&["stability", "--out-dir", d, "--sweep-points", "500", "--inject-indefinite"]);
    assert!(o.status.success());
    let hooked = read_json(&dir.path().join("stability_summary.json"));
    let first_was_clean = csv.lines().nth(1).unwrap().ends_with("true");
    let expected = base + u64::from(first_was_clean);
    assert_eq!(hooked["regimes"][0]["violations"].as_u64().unwrap(), expected);
    assert!(hooked["violations"].as_u64().unwrap() >= 1);
}

#[test]
fn validate_default_passes_with_findings() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v = read_json(&dir.path().join("validation.json"));
    assert_eq!(v["passed"], Value::Bool(true));
    let f = &v["findings"];
    assert!(f["leading_factors"].as_array().unwrap().len() == 2);
    assert!(f["closed_form_audits"].as_array().unwrap().len() == 8);
    assert!(f["mismatch_logged"].as_u64().unwrap() > 0);
    assert!(stdout(&o).contains("findings:"));
}

#[test]
fn validate_coarse_grid_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", "--grid-e", "32", "--grid-ej", "32", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v = read_json(&dir.path().join("validation.json"));
    assert!(!v["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn validate_corrupted_form_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", "--corrupt-closed-form", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v = read_json(&dir.path().join("validation.json"));
    assert_eq!(v["passed"], Value::Bool(false));
}

#[test]
fn coeffs_query() {
    let o = run(&["coeffs", "--regime", "apsidal", "--inc", "1.0"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["form"]["bbar"].as_f64(), Some(0.0));
    assert_eq!(v["verdict"]["positive_definite"], Value::Bool(true));
    for regime in ["small-i", "general"] {
        assert!(run(&["coeffs", "--regime", regime]).status.success());
    }
    assert_eq!(run(&["coeffs", "--regime", "oracle"]).status.code(), Some(2));
    assert_eq!(run(&["coeffs", "--regime", "apsidal", "--inc", "0"]).status.code(), Some(2));
}

#[test]
fn portrait_writes_one_curve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r3.csv");
    let o = run(&["portrait", "--level", "1.002875125", "--output", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("librating"));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("tau,theta,e,p2,q2"));
    assert!(text.lines().count() > 100);
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("one"), dir.path().join("two"));
    for (d, threads) in [(&d1, "1"), (&d2, "3")] {
        let o = bin()
            .args(["stability", "--sweep-points", "200", "--out-dir", d.to_str().unwrap()])
            .env("SECULAR3BP_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(d1.join("stability.csv")).unwrap(), std::fs::read(d2.join("stability.csv")).unwrap());
}
