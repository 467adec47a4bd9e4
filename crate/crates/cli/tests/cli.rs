use std::path::Path;
use std::process::{Command, Output};

use dmind3_core::harness::corpus::known;
use dmind3_core::intent::abi::{encode_args, AbiValue};
use dmind3_core::intent::TransactionPayload;
use dmind3_core::primitives::{Address, Selector};
use primitive_types::U256;
use tempfile::TempDir;

fn dmind3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmind3")).args(args).output().expect("binary runs")
}

fn call(sig: &str, args: &[AbiValue]) -> Vec<u8> {
    let mut d = Selector::of_signature(sig).0.to_vec();
    d.extend(encode_args(args));
    d
}

fn tx(to: Address, data: Vec<u8>, claim: &str) -> TransactionPayload {
    TransactionPayload {
        chain_id: 1,
        sender: Address([0x11; 20]),
        destination: Some(to),
        value: U256::zero(),
        calldata: data,
        gas_limit: 90_000,
        nonce: 7,
        ui_claim: Some(claim.into()),
    }
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn write_tx(dir: &TempDir, name: &str, t: &TransactionPayload) -> String {
    write(dir, name, &serde_json::to_string(t).unwrap())
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

#[test]
fn decide_maps_verdicts_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let transfer = |to: Address, claim| {
        tx(
            known::usdc(),
            call("transfer(address,uint256)", &[AbiValue::Address(to), AbiValue::Uint(U256::from(5))]),
            claim,
        )
    };
    let clean = write_tx(&dir, "clean.json", &transfer(Address([0x22; 20]), "Send 5 USDC"));
    let out = dmind3(&["decide", "--tx", &clean, "--policy", "default"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["verdict"], "Allow");

    let phish = write_tx(
        &dir,
        "phish.json",
        &tx(
            known::usdc(),
            call("approve(address,uint256)", &[AbiValue::Address(Address([0xee; 20])), AbiValue::Uint(U256::MAX)]),
            "Approve USDC",
        ),
    );
    let out = dmind3(&["decide", "--tx", &phish, "--policy", "default"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["verdict"], "Block");

    // escalated request with the local tier down stays pending
    let mismatch = write_tx(&dir, "mismatch.json", &transfer(Address([0xee; 20]), "Swap USDC for ETH"));
    let cfg = write(&dir, "cfg.json", r#"{"faults": {"local": "Unavailable"}}"#);
    let out = dmind3(&["decide", "--tx", &mismatch, "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["verdict"], "StepUp-pending");

    // policy given as a file
    let policy = write(&dir, "policy.json", r#"{"tau_conf": 0.8, "allowlist": []}"#);
    let out = dmind3(&["decide", "--tx", &clean, "--policy", &policy]);
    assert!(matches!(out.status.code(), Some(0 | 2 | 3)));
}

#[test]
fn decide_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", "{\"chain_id\": 1}");
    let out = dmind3(&["decide", "--tx", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = dmind3(&["decide", "--tx", "/nonexistent/tx.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corpus_replay_and_audit_round_trip() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "spec.json", r#"{"size": 300, "adversarial_fraction": 0.3, "seed": 9}"#);
    let corpus = dir.path().join("c.jsonl").to_string_lossy().into_owned();
    assert!(dmind3(&["gen-corpus", "--spec", &spec, "--out", &corpus]).status.success());
    assert_eq!(std::fs::read_to_string(&corpus).unwrap().lines().count(), 300);

    let report = dir.path().join("r.json").to_string_lossy().into_owned();
    let csv = dir.path().join("r.csv").to_string_lossy().into_owned();
    let out = dmind3(&[
        "replay", "--corpus", &corpus, "--policy", "default", "--network", "baseline", "--out", &report, "--csv", &csv,
        "--workers", "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["items"], 300);
    assert_eq!(r["latency"]["EdgeOnly"]["p50"], 28.0);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("path,count,p50,p95,p99,mean,max"));
    assert!(table.contains("EdgeOnly,"));

    let out = dmind3(&["audit-privacy", "--corpus", &corpus, "--profile", "strict"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["violations"], 0);
    assert_eq!(json(&out)["requests"], 300);

    // a network file with the shipped shape
    let net = write(
        &dir,
        "net.json",
        r#"{"links": {"edge": {"base_ms": 10}, "edge_local": {"base_ms": 20}, "edge_cloud": {"base_ms": 30}, "cloud_local": {"base_ms": 40}}}"#,
    );
    let out = dmind3(&["replay", "--corpus", &corpus, "--network", &net, "--out", &report]);
    assert!(out.status.success());
}

#[test]
fn bench_latency_reports_every_path() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("b.csv");
    let out = dmind3(&["bench-latency", "--network", "baseline", "--size", "400", "--csv", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let rows = json(&out);
    let p50: Vec<f64> = rows.as_array().unwrap().iter().map(|r| r["measured"]["p50"].as_f64().unwrap()).collect();
    assert_eq!(p50, vec![28.0, 210.0, 140.0, 360.0]);
    assert!(Path::new(&csv).exists());
}

#[test]
fn eval_loss_matches_hand_values() {
    let dir = TempDir::new().unwrap();
    let hps = write(
        &dir,
        "hps.json",
        r#"{"log_probs": [[-1.0, -2.0]], "omega": [1.0, 0.5], "layers_theta": [[[3.0, 0.0]]], "layers_ref": [[[0.0, 4.0]]], "lambda": 0.1}"#,
    );
    let out = dmind3(&["eval-loss", "--kind", "hps", "--input", &hps]);
    assert!(out.status.success());
    let v = json(&out)["loss"].as_f64().unwrap();
    assert!((v - 2.5).abs() < 1e-12, "{v}");

    let c3 = write(
        &dir,
        "c3.json",
        r#"{"alpha": [1.0], "log_probs_pos": [-0.5], "pi_theta": [1.0, 0.0], "pi_ref": [0.5, 0.5], "lambda": 1.0}"#,
    );
    let out = dmind3(&["eval-loss", "--kind", "c3", "--input", &c3]);
    let v = json(&out)["loss"].as_f64().unwrap();
    assert!((v - (0.5 + std::f64::consts::LN_2)).abs() < 1e-12, "{v}");

    let bad = write(&dir, "bad.json", r#"{"alpha": [1.0], "log_probs_pos": [0.5], "pi_theta": [1.0], "pi_ref": [1.0], "lambda": 1.0}"#);
    assert_eq!(dmind3(&["eval-loss", "--kind", "c3", "--input", &bad]).status.code(), Some(1));
}
