use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chainlearn_core::identity::Hash32;
use chainlearn_core::{recover_signer, ParticipantAddress, Signature65};
use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn chainlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainlearn"))
        .args(args)
        .env_remove("CHAINLEARN_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_into(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", s(config), "--out", s(out)];
    args.extend_from_slice(extra);
    chainlearn(&args)
}

#[test]
fn bundled_config_runs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run_into(&configs().join("three_tier.json"), &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["audit.jsonl", "metrics.csv", "report.json"]);
    let header = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(header.starts_with("round,hospital_or_ensemble,accuracy,macro_f1,ece,weight,accepted\n"));
}

#[test]
fn every_bundled_scenario_config_runs() {
    let tmp = TempDir::new().unwrap();
    for name in ["three_tier", "dropout", "miscalibrated"] {
        let o = run_into(&configs().join(format!("{name}.json")), &tmp.path().join(name), &[]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("three_tier.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run_into(&cfg, &a, &[])), 0);
    assert_eq!(code(&run_into(&cfg, &b, &[])), 0);
    for f in ["report.json", "metrics.csv", "audit.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn malformed_config_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(configs().join("three_tier.json")).unwrap()).unwrap();
    v["hospitals"][1]["predictor"]["sharpness"] = Value::String("high".into());
    fs::write(&cfg, v.to_string()).unwrap();
    let o = run_into(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("hospitals[1].predictor.sharpness"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").exists());

    v["hospitals"][1]["predictor"]["sharpness"] = 1.0.into();
    v["hospitals"][0]["colour"] = "blue".into();
    fs::write(&cfg, v.to_string()).unwrap();
    let o = run_into(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("hospitals[0]") && stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn invalid_values_and_syntax_are_input_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(configs().join("three_tier.json")).unwrap()).unwrap();
    v["rounds"] = 0.into();
    fs::write(&cfg, v.to_string()).unwrap();
    let o = run_into(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`rounds`"), "{}", stderr(&o));

    fs::write(&cfg, "{\"rounds\": 3,").unwrap();
    assert_eq!(code(&run_into(&cfg, &tmp.path().join("out"), &[])), 2);
    assert_eq!(code(&run_into(&tmp.path().join("missing.json"), &tmp.path().join("out"), &[])), 2);
}

fn report_seed(out: &Path) -> u64 {
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    v["seed"].as_u64().unwrap()
}

#[test]
fn seed_precedence() {
    let tmp = TempDir::new().unwrap();
    let with_seed = configs().join("three_tier.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&with_seed).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("seed");
    let without_seed = tmp.path().join("noseed.json");
    fs::write(&without_seed, v.to_string()).unwrap();

    let bin = env!("CARGO_BIN_EXE_chainlearn");
    let run_env = |cfg: &Path, out: &str, env: Option<&str>, flag: Option<&str>| {
        let out = tmp.path().join(out);
        let mut c = Command::new(bin);
        c.args(["run", "--config", s(cfg), "--out", s(&out)]).env_remove("CHAINLEARN_SEED");
        if let Some(e) = env {
            c.env("CHAINLEARN_SEED", e);
        }
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        let o = c.output().unwrap();
        (code(&o), out)
    };

    let (c, out) = run_env(&with_seed, "a", Some("7"), Some("9"));
    assert_eq!((c, report_seed(&out)), (0, 9));
    let (c, out) = run_env(&with_seed, "b", Some("7"), None);
    assert_eq!((c, report_seed(&out)), (0, 42));
    let (c, out) = run_env(&without_seed, "c", Some("7"), None);
    assert_eq!((c, report_seed(&out)), (0, 7));
    let (c, out) = run_env(&without_seed, "d", None, None);
    assert_eq!((c, report_seed(&out)), (0, 0));
    let (c, _) = run_env(&without_seed, "e", Some("seven"), None);
    assert_eq!(c, 2);
}

#[test]
fn cost_tables() {
    let tmp = TempDir::new().unwrap();
    let o = chainlearn(&["costs", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ix = fs::read_to_string(tmp.path().join("table_ix.csv")).unwrap();
    assert!(ix.lines().any(|l| l == "Ours,128,96,224"), "{ix}");
    assert!(ix.lines().any(|l| l == "FedAvg/FedProx,102228128,102228128,204456256"), "{ix}");
    let x = fs::read_to_string(tmp.path().join("table_x.csv")).unwrap();
    assert!(x.lines().any(|l| l == "Total per round (3 hospitals),901265,36.05,"), "{x}");
    assert!(x.lines().any(|l| l == "registerHospital,174764,6.99,Once per hospital"), "{x}");

    let o = chainlearn(&["costs", "--out", s(tmp.path()), "--hospitals", "5"]);
    assert_eq!(code(&o), 0);
    let x = fs::read_to_string(tmp.path().join("table_x.csv")).unwrap();
    let expected = 48_942 + 5 * 252_464 + 94_931;
    let total = x.lines().find(|l| l.starts_with("Total per round (5 hospitals)")).unwrap();
    assert_eq!(total.split(',').nth(1).unwrap().parse::<u64>().unwrap(), expected);
}

#[test]
fn cost_ledger_for_a_run() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&run_into(&configs().join("three_tier.json"), &run, &[])), 0);
    let costs = tmp.path().join("costs");
    let o = chainlearn(&["costs", "--out", s(&costs), "--report", s(&run.join("report.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ledger = fs::read_to_string(costs.join("ledger.csv")).unwrap();
    let gas: u64 = ledger.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse::<u64>().unwrap()).sum();
    // three registrations and five full rounds of three
    assert_eq!(gas, 3 * 174_764 + 5 * 901_265);
}

#[test]
fn verify_detects_tampering() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(code(&run_into(&configs().join("three_tier.json"), &out, &[])), 0);
    let log = out.join("audit.jsonl");
    assert_eq!(code(&chainlearn(&["verify", s(&log)])), 0);

    let original = fs::read(&log).unwrap();
    let line_starts: Vec<usize> = std::iter::once(0)
        .chain(original.iter().enumerate().filter(|(_, &b)| b == b'\n').map(|(i, _)| i + 1))
        .collect();
    let target = line_starts[4] + 30;
    let mut bad = original.clone();
    bad[target] ^= 0x01;
    let tampered = tmp.path().join("tampered.jsonl");
    fs::write(&tampered, &bad).unwrap();
    let o = chainlearn(&["verify", s(&tampered)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seq 4"), "{}", stderr(&o));

    bad = original.clone();
    bad[line_starts[2] + 5] = 0xff;
    fs::write(&tampered, &bad).unwrap();
    let o = chainlearn(&["verify", s(&tampered)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seq 2"), "{}", stderr(&o));

    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&chainlearn(&["verify", s(&empty)])), 0);
    assert_eq!(code(&chainlearn(&["verify", s(&tmp.path().join("nope.jsonl"))])), 2);
}

#[test]
fn replay_matches_run() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(code(&run_into(&configs().join("dropout.json"), &out, &[])), 0);
    let o = chainlearn(&["replay", s(&out.join("audit.jsonl"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let replayed: Value = serde_json::from_slice(&o.stdout).unwrap();
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(replayed["state_digest"], report["state_digest"]);
    assert_eq!(replayed["audit_head"], report["audit_head"]);
    assert_eq!(replayed["state"]["current_round"], 10);

    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&chainlearn(&["replay", s(&empty)])), 1);
}

#[test]
fn spoof_arms() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("spoof.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = chainlearn(&["spoof", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.join("spoof_report.json")).unwrap(), fs::read(b.join("spoof_report.json")).unwrap());

    let rep: Value = serde_json::from_str(&fs::read_to_string(a.join("spoof_report.json")).unwrap()).unwrap();
    let arm = |name: &str| rep["arms"].as_array().unwrap().iter().find(|x| x["arm"] == name).unwrap().clone();
    assert_eq!(arm("spoofed_poc")["attacker_status"], "rejected: CapacityMismatch");
    assert_eq!(arm("spoofed_no_poc")["attacker_status"], "accepted");
    for p in arm("spoofed_no_poc")["participants"].as_array().unwrap() {
        assert!(p.as_array().unwrap().iter().any(|n| n == "Attacker"));
    }
    for p in arm("spoofed_poc")["participants"].as_array().unwrap() {
        assert!(!p.as_array().unwrap().iter().any(|n| n == "Attacker"));
    }
    let summary = fs::read_to_string(a.join("spoof_summary.csv")).unwrap();
    assert!(summary.contains("spoofed_poc,rejected: CapacityMismatch"), "{summary}");
}

#[test]
fn signed_benchmark_recovers_to_key_address() {
    let tmp = TempDir::new().unwrap();
    let key = tmp.path().join("key.hex");
    fs::write(&key, format!("{}\n", "11".repeat(32))).unwrap();
    let o = chainlearn(&["benchmark", "--inject", "420", "--key", s(&key)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["tier"], "strong");
    assert_eq!(v["architecture"]["family"], "ResNet50");
    let hash: Hash32 = v["benchmark_hash"].as_str().unwrap().parse().unwrap();
    let sig: Signature65 = v["signature"].as_str().unwrap().parse().unwrap();
    let addr: ParticipantAddress = v["address"].as_str().unwrap().parse().unwrap();
    assert_eq!(recover_signer(&hash, &sig).unwrap(), addr);

    assert_eq!(code(&chainlearn(&["benchmark", "--inject", "-5"])), 2);
    fs::write(&key, "zz").unwrap();
    assert_eq!(code(&chainlearn(&["benchmark", "--inject", "5", "--key", s(&key)])), 2);
}

#[test]
fn measured_benchmark_smoke() {
    let o = chainlearn(&["benchmark", "--steps", "3", "--batch", "4", "--warmup", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["throughput"].as_f64().unwrap() > 0.0);
    assert!(v.get("signature").is_none());
}
