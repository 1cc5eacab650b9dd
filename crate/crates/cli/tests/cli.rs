use std::path::PathBuf;
use std::process::{Command, Output};

use stability_core::circuit::{emit_circuit, TruthTableCircuit};
use stability_core::harness::Report;
use stability_core::tape::RandomTape;
use stability_kit::{emit_report, run_suite, ExperimentConfig, Format};

fn kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stability-kit")).args(args).output().unwrap()
}

fn tmp(name: &str, contents: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn report(out: &Output) -> Report {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn same_seed_same_bytes() {
    let args = ["cs-explicit", "--seed", "0a", "--trials", "2000"];
    let a = kit(&args);
    let b = kit(&args);
    assert_eq!(a.stdout, b.stdout);
    let r = report(&a);
    assert_eq!(a.status.code(), Some(if r.pass { 0 } else { 1 }));
    assert!(r.wall_clock_secs.is_none());
    assert!(r.metrics.contains_key("c02.worst_disagreement"));
    let other = kit(&["cs-explicit", "--seed", "0b", "--trials", "2000"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn thread_cap_does_not_change_output() {
    let args = ["dp2rep", "--seed", "1", "--trials", "2000"];
    let a = kit(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_stability-kit"))
        .args(args)
        .env("STABILITY_KIT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
    let r = report(&a);
    assert_eq!(r.constants["approximate"], 0.0);
    assert!(r.constants.contains_key("c09.eps"));
}

#[test]
fn corrsamp_with_a_circuit_file() {
    let c = TruthTableCircuit::random(6, 4, &mut RandomTape::from_u128(3)).unwrap();
    let path = tmp("c6.circ", &emit_circuit(&c));
    let out = kit(&["corrsamp", "--circuit", path.to_str().unwrap(), "--nu", "0.1", "--trials", "3000", "--seed", "7"]);
    let r = report(&out);
    assert!(r.pass, "{:?}", r.failures());
    assert!(r.metrics.contains_key("tv_to_target") && r.metrics.contains_key("bot_rate"));
    for k in ["c0", "c1", "c2", "k", "t1", "t2", "rounds_mean", "rounds_max"] {
        assert!(r.constants.contains_key(k), "{k}");
    }
    let hist = r.details["histogram"].as_object().unwrap();
    assert_eq!(hist.values().map(|v| v.as_u64().unwrap()).sum::<u64>(), 3000);
}

#[test]
fn learn_finite_with_files() {
    let class = tmp("class.json", r#"{"domain_size":4,"hypotheses":["0000","0011","0101","1111"]}"#);
    let dist = tmp(
        "dist.json",
        r#"{"points":[[0,false,1],[1,true,1],[2,false,1],[3,true,1]]}"#,
    );
    let out = kit(&[
        "learn-finite",
        "--class",
        class.to_str().unwrap(),
        "--dist",
        dist.to_str().unwrap(),
        "--seed",
        "2",
    ]);
    let r = report(&out);
    assert!(r.pass, "{:?}", r.failures());
    assert_eq!(r.details["output"], serde_json::json!(2));
    assert!(r.metrics.contains_key("measured_replicability"));
    assert!(r.metrics.contains_key("measured_error"));
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn crypto_sep_fields() {
    let out = kit(&["crypto-sep", "--prime-bits", "12", "--eps", "0.5", "--beta", "0.2", "--trials", "300"]);
    let r = report(&out);
    for k in ["advantage", "dp_ratio_max", "failure_rate"] {
        assert!(r.metrics.contains_key(k), "{k}");
    }
    assert!(r.pass, "{:?}", r.failures());
}

#[test]
fn csv_has_one_row_per_metric() {
    let out = kit(&["rep2dp", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let json = report(&kit(&["rep2dp"]));
    assert_eq!(text.lines().count(), json.metrics.len() + 1);
    assert!(text.starts_with("suite,seed,metric,"));
}

#[test]
fn config_errors_are_named() {
    let bad = tmp("bad.json", r#"{"suite":"learn-finite","rho":1.5}"#);
    let out = kit(&["learn-finite", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho"));
    let out = kit(&["learn-finite", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = kit(&["nope"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn unknown_keys_warn_and_run() {
    let cfg = tmp("warn.json", r#"{"suite":"rep2dp","seed":"00","shade":3}"#);
    let out = kit(&["rep2dp", "--config", cfg.to_str().unwrap(), "--wall-clock"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("shade"));
    assert!(report(&out).wall_clock_secs.is_some());
}

#[test]
fn out_flag_writes_the_file() {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ordering.json");
    let out = kit(&["list-hh", "--trials", "200", "--out", path.to_str().unwrap()]);
    assert!(out.stdout.is_empty());
    let r: Report = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(r.metrics.contains_key("c13.replicability"));
}

#[test]
fn json_round_trip() {
    let mut c = ExperimentConfig::new("rep2pg");
    c.settings.trials = Some(100);
    let r = run_suite(&c).unwrap();
    let back: Report = serde_json::from_str(&emit_report(&r, Format::Json)).unwrap();
    assert_eq!(back, r);
}

#[test]
fn verify_all_reports_every_criterion() {
    let mut c = ExperimentConfig::new("verify-all");
    c.settings.trials = Some(200);
    let r = run_suite(&c).unwrap();
    for id in 1..=13 {
        let prefix = format!("c{id:02}.");
        assert!(r.metrics.keys().any(|k| k.starts_with(&prefix)), "{prefix}");
    }
    assert_eq!(r.suite, "verify-all");
}
