use std::f64::consts::TAU;
use std::path::PathBuf;
use std::process::{Command, Output};

use paircraft::fixtures;
use paircraft::reproduce::{beating_delays, synthetic_beating, BEATING_C0};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_paircraft"));
    c.env_remove("PAIRCRAFT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("paircraft-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn timebin_counts_path() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/timebin_counts.csv").to_string()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "fringe"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "cw", "--power", "x", "--duration", "1"]).status.code(), Some(2));
    assert_eq!(run(&["reproduce", "paper", "--only", "9"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn validation_failures_exit_1_with_structured_message() {
    let bad = scratch("bad_table.csv");
    std::fs::write(&bad, "photon1,photon2,n\nH,V,3\n").unwrap();
    let out = run(&["tomo", "timebin", "--counts", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");

    let out = run(&["simulate", "cw", "--power=-1", "--duration", "1"]);
    assert_eq!(out.status.code(), Some(1));

    let cfg = scratch("bad.cfg");
    std::fs::write(&cfg, "window = 300 nm\n").unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "tomo", "freqbin"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn simulate_cw_is_byte_identical() {
    let args = ["simulate", "cw", "--power", "0", "--duration", "1", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let other = run(&["simulate", "cw", "--power", "0", "--duration", "1", "--seed", "8"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn seed_environment_override() {
    let base = ["simulate", "cw", "--power", "0.1", "--duration", "0.5"];
    let env7 = bin().args(base).env("PAIRCRAFT_SEED", "7").output().unwrap();
    let flag7 = run(&[&base[..], &["--seed", "7"]].concat());
    let default = run(&base);
    assert_eq!(env7.stdout, flag7.stdout);
    assert_ne!(env7.stdout, default.stdout);
    let bad = bin().args(base).env("PAIRCRAFT_SEED", "seven").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn tomo_timebin_on_reference_counts() {
    let out = run(&["tomo", "timebin", "--counts", &timebin_counts_path(), "--resamples", "100"]);
    assert!(out.status.success());
    let v = json(&out);
    let f = v["fidelity"].as_f64().unwrap();
    assert!((0.852..=0.942).contains(&f), "{f}");
    assert_eq!(v["linear_is_physical"], false);
}

#[test]
fn simulated_outcomes_feed_tomography() {
    let runs = scratch("runs.json");
    let table = scratch("table.json");
    let out = run(&[
        "simulate", "timebin", "--pairs", "200000", "--seed", "3",
        "--out", runs.to_str().unwrap(), "--table-out", table.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = json(&run(&["tomo", "timebin", "--outcomes", runs.to_str().unwrap(), "--resamples", "0"]));
    let b = json(&run(&["tomo", "timebin", "--counts", table.to_str().unwrap(), "--resamples", "0"]));
    assert_eq!(a["fidelity"], b["fidelity"]);
    let f = a["fidelity"].as_f64().unwrap();
    // sampled from the projected reference state, F = 0.8625
    assert!((f - 0.8625).abs() < 0.02, "{f}");
}

#[test]
fn analyze_beating_recovers_envelope() {
    let truth = fixtures::reference_beating_params(BEATING_C0);
    let tau = beating_delays();
    let y = synthetic_beating(&truth, &tau, 11);
    let mut text = String::from("tau_ps,count\n");
    for (t, c) in tau.iter().zip(&y) {
        text.push_str(&format!("{},{}\n", t * 1e12, c));
    }
    let path = scratch("beating.csv");
    std::fs::write(&path, text).unwrap();
    let out = run(&["analyze", "beating", "--in", path.to_str().unwrap(), "--resamples", "200", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let omega = v["fit"]["params"]["omega"].as_f64().unwrap();
    let sigma = v["fit"]["bootstrap_sigma"][2].as_f64().unwrap();
    assert!((omega - TAU * 116.4e9).abs() < 3.0 * sigma, "{omega} ± {sigma}");
}

#[test]
fn car_from_simulated_events() {
    let ev = scratch("events.csv");
    let out = run(&["simulate", "cw", "--power", "0.273", "--duration", "5", "--seed", "2", "--out", ev.to_str().unwrap()]);
    assert!(out.status.success());
    let out = run(&["analyze", "car", "--events", ev.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let (car, sigma) = (v["car"].as_f64().unwrap(), v["car_sigma"].as_f64().unwrap());
    assert!((car - fixtures::REFERENCE_CAR).abs() < 4.0 * sigma, "{car} ± {sigma}");
}

#[test]
fn freqbin_report() {
    let v = json(&run(&["tomo", "freqbin"]));
    assert!((v["fidelity"].as_f64().unwrap() - 0.97625).abs() < 1e-5);
}

#[test]
fn scans_write_csv() {
    let out = run(&["scan", "beating", "--start-ps", "-1", "--stop-ps", "1", "--step-ps", "0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("x,rate\n"));
}

#[test]
fn reproduce_subset() {
    let out = run(&["reproduce", "paper", "--only", "1,2,3,8"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
