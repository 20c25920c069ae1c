use std::path::Path;
use std::process::{Command, Output};

fn stbpu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stbpu")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = stbpu(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = stbpu(args);
    assert!(!out.status.success(), "{args:?} should fail");
    assert!(!out.stderr.is_empty());
    String::from_utf8(out.stderr).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_prints_the_full_size_thresholds() {
    let text = ok(&["analyze", "--r", "0.05"]);
    assert!(text.contains("41500") && text.contains("26500"), "{text}");
    let csv = ok(&["analyze", "--geom", "scaled", "--csv"]);
    assert!(csv.lines().count() > 2);
    assert!(fails(&["analyze", "--r", "0"]).starts_with("stbpu: "));
    fails(&["analyze", "--geom", "1,2"]);
}

#[test]
fn synth_then_simulate_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("csh.trace");
    ok(&["synth", "--scenario", "context_switch_heavy", "--total", "3000", "--out", path(&trace)]);
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 3000);

    let csv = dir.path().join("r.csv");
    ok(&["simulate", "--trace", path(&trace), "--model", "stbpu", "--r", "0.05", "--out", path(&csv)]);
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() >= 2);
    let jsonl = dir.path().join("r.jsonl");
    ok(&["simulate", "--trace", path(&trace), "--model", "stbpu", "--share-st", "1=0", "--out", path(&jsonl)]);
    let line = std::fs::read_to_string(&jsonl).unwrap();
    assert!(serde_json::from_str::<serde_json::Value>(line.lines().next().unwrap()).unwrap()["oae"].is_number());

    let cmp = ok(&["compare", "--trace", path(&trace), "--models", "baseline,stbpu,flush_ibpb"]);
    assert!(cmp.contains("flush_ibpb"));
    ok(&["sweep-r", "--synth", "loop", "--scaled", "--r", "1,0.1"]);

    fails(&["simulate", "--trace", path(&dir.path().join("missing.trace"))]);
    fails(&["simulate", "--synth", "loop", "--model", "nonsense"]);
    fails(&["simulate", "--synth", "loop", "--set", "btb_ways"]);
    fails(&["compare", "--synth", "loop", "--models", "baseline"]);
}

#[test]
fn bad_trace_lines_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.trace");
    std::fs::write(&trace, "0 1 u c 0x400000 1 0x400100\n0 1 u c 0x1000000000000 1 0x0\n").unwrap();
    let err = fails(&["simulate", "--trace", path(&trace)]);
    assert!(err.contains("address exceeds 48 bits"), "{err}");
}

#[test]
fn attack_cells_and_searches() {
    let base = ok(&["attack", "--scenario", "btb-rb-he", "--model", "baseline", "--seeds", "2"]);
    assert!(base.contains("btb-rb-he"));
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    ok(&["attack", "--scenario", "btb-inject", "--model", "stbpu", "--share-st", "--out", path(&csv)]);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2);
    ok(&["attack", "--scenario", "collision", "--model", "baseline", "--trials", "20000"]);
    ok(&["attack", "--scenario", "gem", "--model", "baseline", "--budget", "200000"]);
    fails(&["attack", "--scenario", "pht-eb-he"]);
}

#[test]
fn remap_generation_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-remap", "--role", "R3", "--count", "3", "--samples", "2000", "--out", path(dir.path())]);
    let net = dir.path().join("r3.net");
    assert!(net.exists());
    assert_eq!(std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap().lines().count(), 4);
    let json = ok(&["eval-remap", "--netlist", path(&net), "--role", "R3", "--samples", "2000", "--json"]);
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    assert!(v["avalanche_mean"].as_f64().unwrap() > 0.3);
    fails(&["gen-remap", "--role", "R9", "--out", path(dir.path())]);
}
