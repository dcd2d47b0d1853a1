//! End-to-end checks of the ebsum binary: exit codes, output schema,
//! determinism.

use std::process::{Command, Output};

fn ebsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebsum"))
        .args(args)
        .env_remove("EBSUM_EPS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON: {e}\n{}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

#[test]
fn pmf_json_schema() {
    let out = ebsum(&["pmf", "--profile", "binomial:3:0.5", "--verify"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    let mass = v["mass"].as_array().expect("mass array");
    assert_eq!(mass.len(), 4);
    assert!((mass[0].as_f64().unwrap() - 0.125).abs() < 1e-15);
    assert_eq!(v["shift"], 0);
    assert!(v["trunc_err"].as_f64().unwrap() >= 0.0);
}

#[test]
fn pmf_csv_format() {
    let out = ebsum(&["pmf", "--profile", "poisson:1.6", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,mass,trunc_err"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("0,"), "{first}");
    let f0: f64 = first.split(',').nth(1).unwrap().parse().unwrap();
    assert!((f0 - (-1.6f64).exp()).abs() < 1e-14);
}

#[test]
fn mode_reports_interval_and_median() {
    let out = ebsum(&["mode", "--profile", "binomial:8:0.33333333333333331"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["mode"]["m_minus"], 2);
    assert_eq!(v["mode"]["m_plus"], 3);
    assert_eq!(v["mode"]["twin"], true);
    assert!(v["median"]["lo"].as_i64().is_some());
}

#[test]
fn malformed_profile_is_exit_2() {
    let out = ebsum(&["pmf", "--profile", "{\"lambda\": \"x\"}"]);
    assert_eq!(code(&out), 2);
    let out = ebsum(&["pmf", "--profile", "binomial:3:1.5"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn budget_violation_is_exit_3() {
    let out = ebsum(&["pmf", "--profile", "poisson:900"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn unsupported_family_is_exit_4() {
    let out = ebsum(&["ridge", "--family", "ks", "--nmax", "50"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn bad_eps_env_is_exit_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_ebsum"))
        .args(["pmf", "--profile", "poisson:1.0"])
        .env("EBSUM_EPS", "tiny")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn scan_pass_and_csv() {
    let out = ebsum(&[
        "scan", "--family", "binomial-n", "--p", "1/3", "--kmax", "12", "--format", "csv",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().contains("k,"), "{text}");
    assert!(text.lines().count() >= 13);
}

#[test]
fn check_darroch_is_deterministic() {
    let args = [
        "check", "darroch", "--seed", "42", "--cases", "400", "--format", "csv",
    ];
    let a = ebsum(&args);
    let b = ebsum(&args);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout, "same seed must give identical output");
}

#[test]
fn check_requires_seed() {
    let out = ebsum(&["check", "darroch"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn transport_report_contents() {
    let out = ebsum(&["transport", "--profile", "binomial:12:0.385"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    let gamma = v["peak_skewness"].as_f64().unwrap();
    assert!(0.0 < gamma && gamma < 1.0);
    assert_eq!(v["optimal_two_point"]["s"], 2);
    assert_eq!(v["two_bernoulli"]["kind"], "two-bernoulli");
    let out = ebsum(&["transport", "--profile", "poisson:0.5"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    let g = v["poisson_break"]["gamma"].as_f64().unwrap();
    assert!((g - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn bounds_report_and_out_file() {
    let dir = std::env::temp_dir().join(format!("ebsum-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bounds.json");
    let out = ebsum(&["bounds", "--k", "2", "--n", "3", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!((v["min_mu"].as_f64().unwrap() - (1.0 + 1.0 / 3.0)).abs() < 1e-12);
    assert!((v["max_mu"].as_f64().unwrap() - (2.0 - 1.0 / 3.0)).abs() < 1e-12);
    assert_eq!(v["simplex_vertices"].as_array().unwrap().len(), 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_subcommand_is_exit_2() {
    let out = ebsum(&["frobnicate"]);
    assert_eq!(code(&out), 2);
}
