use std::path::{Path, PathBuf};
use std::process::Command;

use agediff_cli::{execute, load_scenario, parse_scenario, Scenario};
use proptest::prelude::*;
use serde_json::Value;

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agediff"))
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const SPECTRAL: &str = r#"{
    "age": {"a_max": 1.0, "n_age": 101},
    "space": {"n_x": 19},
    "model": {"kind": "example1"},
    "run": {"kind": "spectral", "aeg_horizon": 2.0, "initial": "1 + a * x", "generator": true},
    "params": {"generator_tol": 1e-6}
}"#;

#[test]
fn shipped_scenarios_load() {
    let mut n = 0;
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn spectral_example1_is_critical() {
    let sc = parse_scenario(SPECTRAL, &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rec = execute(&sc, dir.path()).unwrap();
    assert!(rec.ok());
    let s = read_json(&dir.path().join("spectral.json"));
    assert!(s["lambda0"].as_f64().unwrap().abs() < 1e-8);
    assert_eq!(s["classification"], "critical");
    assert!(s["generator"]["estimate"].as_f64().unwrap().abs() < 5e-3);
    assert_eq!(s["aeg"]["passed"], true);
    let aeg = std::fs::read_to_string(dir.path().join("aeg.csv")).unwrap();
    assert!(aeg.starts_with("t,error\n"));
    let run = read_json(&dir.path().join("run.json"));
    assert_eq!(run["schema_version"], 1);
    assert_eq!(run["scenario"]["params"]["tol"], 1e-8);
    assert_eq!(run["scenario"]["space"]["bc"], "dirichlet");
}

#[test]
fn oracle_unit_rates_have_zero_growth() {
    let sc = parse_scenario(
        r#"{"age": {"a_max": 1.0, "n_age": 1001}, "run": {"kind": "oracle", "beta": "1", "mu": "0"}}"#,
        &[],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    execute(&sc, dir.path()).unwrap();
    let o = read_json(&dir.path().join("oracle.json"));
    assert!(o["lambda0"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn branch_writes_twenty_certified_rows() {
    let sc = parse_scenario(
        r#"{
            "age": {"a_max": 1.0, "n_age": 101},
            "space": {"n_x": 19},
            "model": {"kind": "example1"},
            "run": {"kind": "branch", "eta_start": 1.05, "eta_end": 3.0}
        }"#,
        &[],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rec = execute(&sc, dir.path()).unwrap();
    assert!(rec.ok());
    assert_eq!(rec.summary["bounds_passed"], true);
    let csv = std::fs::read_to_string(dir.path().join("branch.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "eta,amplitude,sup_norm,pde_residual,birth_residual,r_check"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20);
    for r in &rows {
        assert!(r[3] <= 1e-6 && r[4] <= 1e-6 && (r[5] - 1.0).abs() <= 1e-6, "{r:?}");
    }
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1]));
    assert_eq!(std::fs::read_dir(dir.path().join("fields")).unwrap().count(), 20);
}

#[test]
fn reruns_are_byte_identical() {
    let text = std::fs::read_to_string(scenarios_dir().join("custom_simulate.json")).unwrap();
    for sc in [
        parse_scenario(&text, &[]).unwrap(),
        parse_scenario(SPECTRAL, &[]).unwrap(),
    ] {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let r1 = execute(&sc, d1.path()).unwrap();
        execute(&sc, d2.path()).unwrap();
        for f in &r1.files {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert!(a == b, "{f} differs between runs");
        }
    }
}

#[test]
fn failed_runs_still_leave_a_record() {
    let sc = parse_scenario(
        r#"{"age": {"a_max": 1.0, "n_age": 101},
            "run": {"kind": "oracle", "beta": "1", "mu": "0",
                    "gurtin_maccamy": {"beta": "0.5 / (1 + U)", "mu": "0"}}}"#,
        &[],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = execute(&sc, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let run = read_json(&dir.path().join("run.json"));
    assert_eq!(run["status"], "failed");
    assert!(run["summary"]["error"].as_str().unwrap().contains("r_0"));
}

#[test]
fn semilinear_logistic_stays_bounded() {
    let path = scenarios_dir().join("custom_semilinear.json");
    let sc = load_scenario(&path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rec = execute(&sc, dir.path()).unwrap();
    let sup = rec.summary["final_sup_norm"].as_f64().unwrap();
    assert!(sup.is_finite() && sup < 100.0);
    let header = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(header.starts_with("t,a,x,u\n"));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let spectral = dir.path().join("s.json");
    std::fs::write(&spectral, SPECTRAL).unwrap();
    let out = dir.path().join("out");

    let ok = bin()
        .args(["spectral", "-s"])
        .arg(&spectral)
        .arg("-o")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("run.json").exists());

    let wrong_kind = bin()
        .args(["branch", "-s"])
        .arg(&spectral)
        .arg("-o")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(wrong_kind.status.code(), Some(2));

    let bad = bin()
        .args(["validate", "-s"])
        .arg(&spectral)
        .args(["--override", "age.a_max=-1"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("age.a_max"));

    let typo = bin()
        .args(["validate", "-s"])
        .arg(&spectral)
        .args(["--override", "model.betaa=2"])
        .output()
        .unwrap();
    assert_eq!(typo.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&typo.stderr).contains("betaa"));

    let missing = bin().args(["validate", "-s", "/nonexistent/x.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(4));

    let good = bin().args(["validate", "-s"]).arg(&spectral).output().unwrap();
    assert_eq!(good.status.code(), Some(0));
    let echoed: Scenario = serde_json::from_slice(&good.stdout).unwrap();
    assert_eq!(echoed.params.damping, 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenarios_round_trip(
        a_max in 0.1f64..10.0,
        n_age in 3usize..2000,
        n_x in 3usize..200,
        alpha in 0.0f64..5.0,
        damping in 0.01f64..1.0,
        eta in 0.1f64..10.0,
    ) {
        let text = format!(
            r#"{{"age": {{"a_max": {a_max:?}, "n_age": {n_age}}}, "space": {{"n_x": {n_x}}},
                "model": {{"kind": "example1", "alpha": {alpha:?}}},
                "run": {{"kind": "equilibrium", "eta": {eta:?}}},
                "params": {{"damping": {damping:?}}}}}"#
        );
        let sc = parse_scenario(&text, &[]).unwrap();
        let again = parse_scenario(&serde_json::to_string(&sc).unwrap(), &[]).unwrap();
        prop_assert_eq!(sc, again);
    }
}
