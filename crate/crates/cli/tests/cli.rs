//! End-to-end runs of the gpquant binary: exit codes, file formats,
//! determinism, and the quantizer round trip.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpquant"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary spawns")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// Data rows of a CSV file, split into fields.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn eigs_table_matches_the_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eigs.csv");
    run_ok(&["eigs", "--process", "bm", "--out", out.to_str().unwrap()]);
    let text = read(&out);
    assert!(text.starts_with("k,lambda_n1,lambda_n2,lambda_n3,lambda_rr,lambda_closed,abs_err"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 5);
    for row in &rows {
        let rr: f64 = row[4].parse().unwrap();
        let closed: f64 = row[5].parse().unwrap();
        let err: f64 = row[6].parse().unwrap();
        assert!((rr - closed).abs() <= 1e-9, "rr {rr} vs closed {closed}");
        assert!((err - (rr - closed).abs()).abs() <= 1e-24, "abs_err column disagrees");
    }
}

#[test]
fn fbm_eigs_omit_the_closed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eigs.csv");
    run_ok(&[
        "eigs", "--process", "fbm", "--H", "0.7", "--resolutions", "32,64,128", "--modes", "3",
        "--out", out.to_str().unwrap(),
    ]);
    let text = read(&out);
    assert!(text.starts_with("k,lambda_n1,lambda_n2,lambda_n3,lambda_rr\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 3);
    let lambda1: f64 = rows[0][4].parse().unwrap();
    assert!((lambda1 - 0.37453).abs() < 1e-3, "leading fBm eigenvalue {lambda1}");
}

#[test]
fn an_out_of_range_hurst_exits_two_and_names_it() {
    let out = run(&["eigs", "--process", "fbm", "--H", "1.2"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`H`"), "stderr should name the parameter: {stderr}");
}

#[test]
fn eigenfunction_dump_lands_next_to_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bridge.csv");
    run_ok(&[
        "eigs", "--process", "bridge", "--modes", "2", "--grid", "11", "--out",
        out.to_str().unwrap(),
    ]);
    let modes = read(&dir.path().join("bridge_modes.csv"));
    assert!(modes.starts_with("k,t,e_k\n"));
    let rows = csv_rows(&modes);
    assert_eq!(rows.len(), 2 * 11);
    // The bridge vanishes at both ends; its samples there are zero.
    for row in rows.iter().filter(|r| {
        let t: f64 = r[1].parse().unwrap();
        t == 0.0 || t == 1.0
    }) {
        let v: f64 = row[2].parse().unwrap();
        assert!(v.abs() < 1e-9, "bridge eigenfunction {v} at the boundary");
    }
}

#[test]
fn quantize_writes_a_valid_product_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.json");
    run_ok(&[
        "quantize", "--process", "fbm", "--H", "0.3", "--N", "20", "--resolutions", "32,64,128",
        "--dump-paths", "--out", out.to_str().unwrap(),
    ]);
    let file: serde_json::Value = serde_json::from_str(&read(&out)).unwrap();
    assert_eq!(file["process"], "fbm");
    assert_eq!(file["structure"]["type"], "product");
    let probs = file["probabilities"].as_array().unwrap();
    let sizes: Vec<u64> =
        file["structure"]["sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert!(sizes.iter().product::<u64>() <= 20);
    assert_eq!(probs.len() as u64, sizes.iter().product::<u64>());
    let total: f64 = probs.iter().map(|p| p.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() <= 1e-12, "cell masses sum to {total}");

    // One row per codebook path, all starting at chi(0) = 0.
    let paths = read(&dir.path().join("q_paths.csv"));
    let rows = csv_rows(&paths);
    assert_eq!(rows.len(), probs.len());
    for row in &rows {
        let at_zero: f64 = row[1].parse().unwrap();
        assert_eq!(at_zero, 0.0, "path {} starts at {at_zero}", row[0]);
    }
}

#[test]
fn reconstruct_covers_the_brownian_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.json");
    run_ok(&[
        "quantize", "--process", "bm", "--N", "12", "--sizes", "4,3", "--resolutions",
        "16,24,32", "--out", q.to_str().unwrap(),
    ]);
    let cov = dir.path().join("cov.csv");
    run_ok(&[
        "reconstruct", "--quantizer", q.to_str().unwrap(), "--schedule", "0.25,0.5,0.75,1.0",
        "--paths", "40000", "--seed", "2", "--out", cov.to_str().unwrap(),
    ]);
    let rows = csv_rows(&read(&cov));
    assert_eq!(rows.len(), 16);
    for row in &rows {
        let i: f64 = row[0].parse().unwrap();
        let j: f64 = row[1].parse().unwrap();
        let theo: f64 = row[2].parse().unwrap();
        let lo: f64 = row[4].parse().unwrap();
        let hi: f64 = row[5].parse().unwrap();
        // Brownian covariance is min(s, t) on the schedule i/4.
        assert!((theo - (i.min(j) * 0.25)).abs() <= 1e-12);
        assert!(lo - 1e-12 <= theo && theo <= hi + 1e-12, "({i},{j}): {theo} outside [{lo},{hi}]");
    }
}

#[test]
fn a_missing_quantizer_file_exits_four() {
    let out = run(&[
        "reconstruct", "--quantizer", "/nonexistent/q.json", "--schedule", "0.5,1.0",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn identical_runs_produce_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let args = |out: &Path| {
        vec![
            "price".into(), "--payoff".into(), "up-in-call".into(), "--H".into(), "0.3".into(),
            "--sigma".into(), "0.3".into(), "--B".into(), "130".into(), "--rule".into(),
            "opt".into(), "--paths".into(), "20000".into(), "--strata".into(), "4,3".into(),
            "--resolutions".into(), "16,24,32".into(), "--seed".into(), "11".into(),
            "--out".into(), out.to_str().unwrap().to_string(),
        ]
    };
    run_ok(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    run_ok(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(read(&a), read(&b), "same config and seed must give identical bytes");
}

#[test]
fn a_saved_quantizer_prices_like_the_fresh_engine() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.json");
    run_ok(&[
        "quantize", "--process", "fbm", "--H", "0.5", "--N", "12", "--sizes", "4,3",
        "--resolutions", "16,24,32", "--out", q.to_str().unwrap(),
    ]);
    let fresh = dir.path().join("fresh.json");
    let loaded = dir.path().join("loaded.json");
    let common = [
        "price", "--payoff", "vanilla", "--H", "0.5", "--sigma", "0.2", "--paths", "30000",
        "--rule", "prop", "--seed", "5",
    ];
    let mut fresh_args: Vec<&str> = common.to_vec();
    fresh_args.extend(["--strata", "4,3", "--resolutions", "16,24,32", "--out"]);
    fresh_args.push(fresh.to_str().unwrap());
    run_ok(&fresh_args);
    let mut loaded_args: Vec<&str> = common.to_vec();
    loaded_args.extend(["--quantizer", q.to_str().unwrap(), "--out"]);
    loaded_args.push(loaded.to_str().unwrap());
    run_ok(&loaded_args);
    assert_eq!(read(&fresh), read(&loaded), "round trip must not change the price");
}

#[test]
fn the_stratified_price_agrees_with_black_scholes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("price.json");
    run_ok(&[
        "price", "--payoff", "vanilla", "--H", "0.5", "--sigma", "0.2", "--paths", "50000",
        "--rule", "prop", "--strata", "4,3", "--resolutions", "16,24,32", "--seed", "5",
        "--out", out.to_str().unwrap(),
    ]);
    let file: serde_json::Value = serde_json::from_str(&read(&out)).unwrap();
    let price = file["price"].as_f64().unwrap();
    let variance = file["variance"].as_f64().unwrap();
    assert_eq!(file["rule"], "prop");
    assert_eq!(file["M"], 50000);
    // Classical Black-Scholes call, S = K = 100, r = 0, sigma = 0.2, T = 1.
    let closed = 7.965567455405804;
    assert!(
        (price - closed).abs() <= 3.0 * variance.sqrt(),
        "price {price} vs {closed} with se {}",
        variance.sqrt()
    );
    let budgets: u64 = file["per_stratum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["budget"].as_u64().unwrap())
        .sum();
    assert_eq!(budgets, 50000);
}

#[test]
fn bench_variance_lists_the_rules_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    run_ok(&[
        "bench-variance", "--payoff", "vanilla", "--H", "0.5", "--sigma", "0.2", "--paths",
        "8000", "--strata", "4,3", "--resolutions", "16,24,32", "--seed", "3", "--out",
        out.to_str().unwrap(),
    ]);
    let text = read(&out);
    assert!(text.starts_with("rule,estimate,ci_lo,ci_hi,estimator_variance,per_sample_variance"));
    let rows = csv_rows(&text);
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["plain", "prop", "lip", "opt"]);
    for row in &rows {
        let variance: f64 = row[4].parse().unwrap();
        assert!(variance.is_finite() && variance >= 0.0);
    }
}

#[test]
fn the_env_dir_catches_unrouted_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["eigs", "--process", "bm", "--modes", "2"])
        .env("GPQUANT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("eigs.csv").exists());
}
