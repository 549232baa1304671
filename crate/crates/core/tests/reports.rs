use std::process::Command;

use orbitcz::suite::{run_suite, Context, Suite, SuiteConfig};
use orbitcz::VerificationReport;

fn small() -> SuiteConfig {
    SuiteConfig { n: 65, k_max: 4, ms: vec![1, 2], cz_inputs: 4, triples: 100, ..SuiteConfig::reference_1d() }
}

#[test]
fn identical_configs_give_identical_bytes() {
    for s in [Suite::Group, Suite::Cz, Suite::Paraproduct] {
        let a = run_suite(s, small()).unwrap().to_json();
        let b = run_suite(s, small()).unwrap().to_json();
        assert_eq!(a, b, "suite {}", s.name());
    }
    let other = SuiteConfig { seed: 7, ..small() };
    assert_ne!(run_suite(Suite::Cz, small()).unwrap().to_json(), run_suite(Suite::Cz, other).unwrap().to_json());
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let seq = run_suite(Suite::All, small()).unwrap();
    let par = run_suite(Suite::All, SuiteConfig { parallel: true, ..small() }).unwrap();
    assert_eq!(seq.to_json(), par.to_json());
}

#[test]
fn all_suite_touches_every_module() {
    let ctx = Context::new(small()).unwrap();
    let rep = orbitcz::suite::run_suite_in(&ctx, Suite::All).unwrap();
    for s in Suite::EACH {
        assert!(rep.metrics.iter().any(|m| m.name.starts_with(&format!("{}.", s.name()))), "no metrics from {}", s.name());
    }
    for module in ["metric", "aoi", "contraction", "weak11_kernel", "kernel", "t1", "wbp", "paraproduct", "holder_besov", "smoothing"] {
        assert!(rep.metrics.iter().any(|m| m.name.contains(&format!(".{module}."))), "nothing from {module}");
    }
    assert_eq!(rep.config["n"], 65);
}

#[test]
fn suite_report_round_trips_and_csv_has_one_row_per_metric() {
    let rep = run_suite(Suite::T1, small()).unwrap();
    let text = rep.to_json();
    let back = VerificationReport::from_json(&text).unwrap();
    assert_eq!(back.to_json(), text);
    assert_eq!(rep.to_csv().lines().count(), rep.metrics.len() + 1);
    assert!(text.contains("\"schema_version\": 1"));
}

#[test]
fn cli_honours_env_overrides_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_orbitcz"))
        .args(["group", "--out"])
        .arg(&json)
        .arg("--csv")
        .arg(&csv)
        .env("ORBITCZ_N", "33")
        .env("ORBITCZ_KMAX", "2")
        .env("ORBITCZ_M", "1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = VerificationReport::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(rep.config["n"], 33);
    assert_eq!(rep.config["k_max"], 2);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), rep.metrics.len() + 1);
}

#[test]
fn cli_rejects_bad_config_with_exit_code_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_orbitcz")).args(["aoi", "--n", "256"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n"));
}
