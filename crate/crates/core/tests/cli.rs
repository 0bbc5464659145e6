use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn fraclap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraclap")).args(args).output().expect("binary runs")
}

fn run_direct(cmd: &str, params: Value, out: &Path) -> Output {
    fraclap(&[cmd, &params.to_string(), "--out", out.to_str().unwrap()])
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn shipped_schema(name: &str) -> Value {
    read_json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.json")))
}

fn assert_valid(schema: &str, doc: &Value) {
    let v = jsonschema::validator_for(&shipped_schema(schema)).unwrap();
    let errs: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errs.is_empty(), "{schema}: {errs:?}");
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(p).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn shipped_schemas_are_current() {
    for name in fraclap::cli::schema_names() {
        assert_eq!(shipped_schema(name), fraclap::cli::schema(name).unwrap(), "regenerate schemas/{name}.json");
    }
}

#[test]
fn thresholds_of_two_dimensional_laplacian() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_direct("thresholds", json!({"r": [1, 1]}), dir.path());
    assert!(o.status.success());
    let t = read_json(&dir.path().join("thresholds.json"));
    assert_eq!(t["values"], json!([0.0, 4.0, 8.0]));
    assert_valid("thresholds_output", &t);
    assert_valid("summary", &read_json(&dir.path().join("summary.json")));
    assert_valid("manifest", &read_json(&dir.path().join("manifest.json")));
}

#[test]
fn kernel_csv_has_one_row_per_lag() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_direct("kernel", json!({"r": 0.5, "K": 50}), dir.path()).status.success());
    let rows = csv_rows(&dir.path().join("kernel.csv"));
    assert_eq!(rows.len(), 51);
    let header = fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    assert!(header.starts_with("k_sites,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_direct("thresholds", json!({"r": [0, 0]}), &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("r != 0"));
    assert_eq!(run_direct("kernel", json!({"r": 0.5, "K": 5, "k": 1}), &dir.path().join("b")).status.code(), Some(2));
    let cfg = json!({"command": "nonsense", "params": {}}).to_string();
    assert_eq!(fraclap(&["run", &cfg, "--out", dir.path().join("c").to_str().unwrap()]).status.code(), Some(2));
    let guarded = json!({"r": 1.0, "lambda": 3.9999, "potential": [{"site": [0], "value": 0.5}]});
    assert_eq!(run_direct("scatter", guarded, &dir.path().join("d")).status.code(), Some(4));
    // a kernel order in the distributional regime is a compute failure
    assert_eq!(run_direct("kernel", json!({"r": -0.75, "K": 5}), &dir.path().join("e")).status.code(), Some(3));
    assert!(!dir.path().join("a").join("manifest.json").exists());
}

#[test]
fn runs_are_byte_reproducible() {
    let cfgs = [
        json!({"command": "kernel", "params": {"r": 0.3, "K": 40}}),
        json!({"command": "scatter", "params": {"r": 1.0, "lambda": {"lo": 1.0, "hi": 3.0, "step": 0.25},
               "potential": [{"site": [0], "value": 0.5}, {"site": [2], "value": -0.25}]}}),
        json!({"command": "evolve", "seed": 11, "params": {"r": 0.7, "model": {"kind": "box", "l": 20},
               "initial": {"kind": "random", "radius": 4}, "times": [0.0, 1.0, 2.5]}}),
        json!({"command": "symbol", "params": {"r": [0.5, -1.0], "points": 9}}),
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (i, c) in cfgs.iter().enumerate() {
        let s = c.to_string();
        for d in [&a, &b] {
            let out = d.path().join(i.to_string());
            let o = fraclap(&["run", &s, "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let man = read_json(&a.path().join(i.to_string()).join("manifest.json"));
        assert_valid("manifest", &man);
        for art in man["artifacts"].as_array().unwrap() {
            let name = art["path"].as_str().unwrap();
            let x = fs::read(a.path().join(i.to_string()).join(name)).unwrap();
            let y = fs::read(b.path().join(i.to_string()).join(name)).unwrap();
            assert_eq!(x, y, "{name} differs between runs");
            assert_eq!(hex::encode(Sha256::digest(&x)), art["sha256"].as_str().unwrap());
            if name == "summary.json" {
                assert_valid("summary", &serde_json::from_slice(&x).unwrap());
            }
        }
    }
}

#[test]
fn seed_flag_changes_random_probe() {
    let dir = tempfile::tempdir().unwrap();
    let p = json!({"r": 1.0, "model": {"kind": "torus", "n": 64}, "initial": {"kind": "random", "radius": 3}, "times": [1.0]});
    for s in ["1", "2"] {
        let out = dir.path().join(s);
        assert!(fraclap(&["evolve", &p.to_string(), "--seed", s, "--out", out.to_str().unwrap()]).status.success());
    }
    let x = fs::read(dir.path().join("1/state_final.csv")).unwrap();
    let y = fs::read(dir.path().join("2/state_final.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn scatter_sweep_over_the_band() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "template": {"command": "scatter", "params": {"r": 1.0, "potential": [{"site": [0], "value": 0.5}]}},
        "param": "lambda",
        "values": {"lo": 1.0, "hi": 3.0, "step": 0.05}
    });
    let o = fraclap(&["sweep", &cfg.to_string(), "--out", dir.path().to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 41);
    assert!(rows.iter().all(|r| r[2] == "0"));
    let records: usize =
        (0..41).map(|i| csv_rows(&dir.path().join(format!("entry_{i:03}")).join("scatter.csv")).len()).sum();
    assert_eq!(records, 41);
    assert_valid("sweep_manifest", &read_json(&dir.path().join("manifest.json")));
}

#[test]
fn mourre_sweep_residuals_decrease_with_box_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "template": {"command": "mourre", "params": {"r": 1.0, "window": [1.0, 3.0]}},
        "param": "L",
        "values": [50, 100, 200]
    });
    assert!(fraclap(&["sweep", &cfg.to_string(), "--out", dir.path().to_str().unwrap()]).status.success());
    let mut r = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let h: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let col = |name: &str| h.iter().position(|x| x == name).unwrap();
    let (fi, si) = (col("first_residual"), col("second_residual"));
    let rows: Vec<Vec<f64>> =
        r.records().map(|x| x.unwrap().iter().map(|c| c.parse().unwrap_or(f64::NAN)).collect()).collect();
    for w in rows.windows(2) {
        assert!(w[1][fi] < w[0][fi] && w[1][si] < w[0][si], "{rows:?}");
    }
}

#[test]
fn sweep_entries_fail_in_isolation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "template": {"command": "kernel", "params": {"K": 10}},
        "param": "r",
        "values": [0.5, -0.75, 1.5]
    });
    assert!(fraclap(&["sweep", &cfg.to_string(), "--out", dir.path().to_str().unwrap()]).status.success());
    let m = read_json(&dir.path().join("manifest.json"));
    let codes: Vec<i64> = m["entries"].as_array().unwrap().iter().map(|e| e["exit_code"].as_i64().unwrap()).collect();
    assert_eq!(codes, vec![0, 3, 0]);
    assert!(dir.path().join("entry_002/kernel.csv").exists());
}

#[test]
fn config_examples_validate_against_schemas() {
    let c = json!({"command": "lap", "params": {"r": 1, "model": {"kind": "torus", "n": 256}, "window": [1, 3], "s": 1, "etas": [0.1, 0.01, 0.001]}});
    assert_valid("config", &c);
    assert_valid("lap", &c["params"]);
    assert_valid("thresholds", &json!({"r": [1, -1]}));
    let bad = jsonschema::validator_for(&shipped_schema("kernel")).unwrap();
    assert!(!bad.is_valid(&json!({"r": 0.5, "K": 3, "extra": true})));
}

#[test]
fn schema_subcommand_lists_and_prints() {
    let o = fraclap(&["schema"]);
    let names = String::from_utf8(o.stdout).unwrap();
    assert!(names.lines().any(|l| l == "scatter"));
    let o = fraclap(&["schema", "kernel"]);
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s, shipped_schema("kernel"));
    assert_eq!(fraclap(&["schema", "nope"]).status.code(), Some(2));
}
