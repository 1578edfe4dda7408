use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn toruslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toruslab")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> (i32, Value) {
    let mut all = args.to_vec();
    let out = dir.to_str().unwrap();
    all.extend(["--out", out]);
    let o = toruslab(&all);
    let code = o.status.code().unwrap();
    let report = fs::read_to_string(dir.join("report.json"))
        .unwrap_or_else(|_| panic!("no report, stderr: {}", String::from_utf8_lossy(&o.stderr)));
    (code, serde_json::from_str(&report).unwrap())
}

#[test]
fn sphere_convexity_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_in(dir.path(), &["verify-convexity", "--model", "sphere", "--samples", "10000", "--tol", "0.02"]);
    assert_eq!(code, 0);
    assert_eq!(r["verdict"], "pass");
    assert!(dir.path().join("momentum.csv").exists());
}

#[test]
fn sphere_product_hull_is_the_square() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_in(dir.path(), &["verify-convexity", "--model", "sphere-product", "--param", "n=2", "--plot"]);
    assert_eq!(code, 0);
    let vertices = r["metrics"]["hull_vertices"].as_array().unwrap();
    assert_eq!(vertices.len(), 4);
    for v in vertices {
        for c in v.as_array().unwrap() {
            assert!((c.as_f64().unwrap().abs() - 1.0).abs() < 2e-2, "{v}");
        }
    }
    assert!(dir.path().join("momentum.svg").exists());
}

#[test]
fn malformed_flag_prints_usage() {
    let o = toruslab(&["verify-convexity", "--model", "sphere", "--samples", "many"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = toruslab(&["verify-convexity", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let o = toruslab(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("level-connectivity"));
}

#[test]
fn unknown_model_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = toruslab(&["verify-convexity", "--model", "torus", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn singular_level_of_height_map_has_two_components() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_in(dir.path(), &["level-connectivity", "--model", "height-circle-map", "--grid", "-1;0"]);
    assert_eq!(code, 0);
    let levels = r["metrics"]["levels"].as_array().unwrap();
    assert_eq!(levels[0]["components"], 2);
    assert_eq!(levels[0]["class"], "singular");
    assert_eq!(levels[1]["components"], 1);
    assert_eq!(r["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn empty_level_has_no_components() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_in(dir.path(), &["level-connectivity", "--model", "sphere", "--grid", "2"]);
    assert_eq!(code, 0);
    let level = &r["metrics"]["levels"][0];
    assert_eq!(level["class"], "empty");
    assert_eq!(level["components"], 0);
}

#[test]
fn zero_time_flow_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) =
        run_in(dir.path(), &["trace-flow", "--model", "sphere", "--start", "0.6,0,0.8", "--time", "0"]);
    assert_eq!(code, 0);
    assert_eq!(r["metrics"]["steps"], 0);
    assert_eq!(r["metrics"]["final_point"], r["metrics"]["start"]);
}

#[test]
fn loopgroup_reports_fixed_images() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_in(dir.path(), &["loopgroup", "--model", "loop-truncation", "--param", "K=3", "--samples", "500"]);
    assert_eq!(code, 0);
    assert_eq!(r["metrics"]["envelope_violations"], 0);
    assert!(dir.path().join("momentum_image.csv").exists());
}

#[test]
fn loopgroup_rejects_other_models() {
    let dir = tempfile::tempdir().unwrap();
    let o = toruslab(&["loopgroup", "--model", "sphere", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn even_index_on_sphere_product() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_in(dir.path(), &["even-index", "--model", "sphere-product", "--param", "n=3"]);
    assert_eq!(code, 0);
    assert_eq!(r["metrics"]["odd_count"], 0);
    assert_eq!(r["metrics"]["index_one_count"], 0);
}

#[test]
fn config_file_runs_like_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(
        &cfg,
        r#"{"command": "verify-convexity", "model": {"name": "sphere-product", "params": {"n": 3}}, "seed": 5, "samples": 2000}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (ca, _) = run_in(&a, &["verify-convexity", "--config", cfg.to_str().unwrap()]);
    let (cb, _) =
        run_in(&b, &["verify-convexity", "--model", "sphere-product", "--param", "n=3", "--seed", "5", "--samples", "2000"]);
    assert_eq!((ca, cb), (0, 0));
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["verify-convexity", "--model", "sphere-product", "--param", "n=3", "--samples", "3000", "--seed", "9"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_in(&a, &args);
    run_in(&b, &args);
    for file in ["report.json", "momentum.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}
