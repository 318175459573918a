use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn unimeas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unimeas")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn dyadic(v: &Value) -> f64 {
    let m = match &v["mantissa"] {
        Value::String(s) => s.parse::<f64>().unwrap(),
        m => m.as_f64().unwrap(),
    };
    m * 2f64.powi(v["exponent"].as_i64().unwrap() as i32)
}

#[test]
fn integrate_a_bump_against_lebesgue() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"measure": {"kind": "lebesgue"}, "function": "(bump 0 1/4 1/2)"}"#);
    let out = unimeas(&["integrate", "--config", &cfg, "--k", "16"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["k"], 16);
    let (lo, hi) = (dyadic(&v["integral"]["lo"]), dyadic(&v["integral"]["hi"]));
    assert!(lo <= 0.375 && 0.375 <= hi && hi - lo <= 2f64.powi(-16));
}

#[test]
fn integrate_one_against_a_dirac() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"measure": {"kind": "dirac", "space": {"kind": "cantor"}, "point": {"index": 0}}, "function": "(one)"}"#);
    let v = json(&unimeas(&["integrate", "--config", &cfg]));
    assert_eq!(v["integral"]["lo"], serde_json::json!({"mantissa": 1, "exponent": 0}));
    assert_eq!(v["integral"]["hi"], serde_json::json!({"mantissa": 1, "exponent": 0}));
}

#[test]
fn malformed_input_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"measure": {"kind": "lebesgue"}, "function": "#);
    assert_eq!(unimeas(&["integrate", "--config", &bad]).status.code(), Some(2));
    let bad_fn = write(&dir, "f.json", r#"{"measure": {"kind": "lebesgue"}, "function": "(bump 0 1/2 1/4)"}"#);
    assert_eq!(unimeas(&["integrate", "--config", &bad_fn]).status.code(), Some(2));
    let unknown = write(&dir, "u.json", r#"{"measure": {"kind": "lebesgue"}, "function": "(one)", "extra": 1}"#);
    assert_eq!(unimeas(&["integrate", "--config", &unknown]).status.code(), Some(2));
    assert_eq!(unimeas(&["integrate"]).status.code(), Some(2));
    assert_eq!(unimeas(&["demo", "tent", "--k", "41"]).status.code(), Some(2));
    assert_eq!(unimeas(&["demo", "no-such-demo"]).status.code(), Some(2));
    assert_eq!(unimeas(&["demo", "tent", "--budget", "0"]).status.code(), Some(2));
}

#[test]
fn tent_deficiency_grows() {
    let out = unimeas(&["demo", "tent"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let series: Vec<f64> = v["certificates"][0]["deficiency"].as_array().unwrap().iter().map(dyadic).collect();
    assert_eq!(series.len(), 12);
    assert!(series.windows(2).all(|w| w[0] < w[1]), "{series:?}");
}

#[test]
fn martingale_of_lambda_against_itself() {
    let out = unimeas(&["demo", "martingale", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["certificates"][0]["mode"], "uniform");
    assert_eq!(v["certificates"][0]["exceedances"], 0);
    assert_eq!(v["certificates"][0]["report"]["verdict"]["verdict"], "within_rate");
}

#[test]
fn kurtz_atom_is_unverified() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "k.json", r#"{"fixture": "atom"}"#);
    let out = unimeas(&["demo", "kurtz", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unverified at budget"));
    assert_eq!(json(&out)["status"], "failed");
}

#[test]
fn a_wrong_expectation_fails_the_demo() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m.json", r#"{"expect": "exceeds"}"#);
    assert_eq!(unimeas(&["demo", "martingale", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn demos_with_descriptors() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "t.json",
        r#"{"space": {"kind": "cantor"}, "target": {"cantor": {"prefix": "1"}},
            "measure": {"kind": "bernoulli", "p": "1/2", "given": "0"}}"#,
    );
    assert_eq!(unimeas(&["demo", "tent", "--config", &cfg, "--depth", "6"]).status.code(), Some(0));
    let cfg = write(&dir, "x.json", r#"{"target": {"dyadic": "5/16"}, "samples": 3}"#);
    let out = unimeas(&["demo", "xi-sample", "--config", &cfg, "--depth", "10"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["certificates"].as_array().unwrap().len(), 3);
}

#[test]
fn out_flag_writes_the_report() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("r.json");
    let out = unimeas(&["demo", "zero-measure", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(Path::new(&path)).unwrap()).unwrap();
    assert_eq!(v["demo"], "zero-measure");
}
