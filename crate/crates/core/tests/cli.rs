use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ivxj::csv_io::{read_panel_path, write_panel_path};
use ivxj::inference::{estimate_variants, Variant};
use ivxj::simulate::{replication_rng, simulate_panel, SimulationSpec};
use ivxj::IvxConfig;
use serde_json::Value;

fn ivxj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivxj")).args(args).output().expect("binary runs")
}

fn simulated_csv(dir: &Path, n: usize, t: usize, seed: u64) -> String {
    let path = dir.join(format!("panel_{seed}.csv"));
    let out = ivxj(&[
        "simulate",
        "--n",
        &n.to_string(),
        "--periods",
        &t.to_string(),
        "--rho",
        "0.99",
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn csv_path_matches_in_memory_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SimulationSpec::univariate(20, 30, 0.99, 0.0, 0.7);
    let panel = simulate_panel(&spec, &mut replication_rng(5, 0, 0)).unwrap();
    let path = dir.path().join("p.csv");
    write_panel_path(&panel, &path).unwrap();
    assert_eq!(read_panel_path(&path).unwrap(), panel);

    let report = json(&ivxj(&["estimate", "--input", path.to_str().unwrap()]));
    let direct = estimate_variants(&panel, &IvxConfig::default(), &Variant::ALL, 0.0).unwrap();
    let estimates = report["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 8);
    for (e, d) in estimates.iter().zip(direct) {
        let d = d.unwrap();
        assert_eq!(e["estimator"], d.variant.label());
        let b = e["beta_hat"]["value"].as_f64().unwrap();
        assert!((b - d.beta_hat).abs() <= 1e-12 * d.beta_hat.abs().max(1e-300));
        assert_eq!(e["se"]["value"].as_f64().unwrap(), d.se);
    }
    assert_eq!(report["schema_version"], "1.0");
    assert_eq!(estimates[7]["bias_factor"]["formula"], "b_IVX");
    assert_eq!(estimates[7]["se"]["formula"], "sigma_IVX");
}

#[test]
fn simulate_writes_the_configured_panel() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    let mut spec = SimulationSpec::univariate(4, 9, 0.6, 0.2, 0.5);
    spec.seed = 77;
    fs::write(&spec_path, spec.to_toml_string().unwrap()).unwrap();
    let out_path = dir.path().join("sim.csv");
    let out = ivxj(&["simulate", "--config", spec_path.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let want = simulate_panel(&spec, &mut replication_rng(77, 0, 0)).unwrap();
    assert_eq!(read_panel_path(&out_path).unwrap(), want);
}

#[test]
fn selected_estimators_and_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated_csv(dir.path(), 10, 20, 1);
    let out = ivxj(&["estimate", "--input", &input, "--estimators", "ivxj,WG_XJ", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("estimator,beta_hat"));
    assert!(lines[1].starts_with("IVXJ,"));
    assert!(lines[2].starts_with("WG-XJ,"));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,time,y,x1\na,1,0.5,\n").unwrap();
    for args in [
        vec!["estimate", "--input", bad.to_str().unwrap()],
        vec!["estimate", "--input", "/definitely/missing.csv"],
        vec!["estimate", "--input", bad.to_str().unwrap(), "--theta", "1.5"],
        vec!["frobnicate"],
    ] {
        let out = ivxj(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let short = dir.path().join("short.csv");
    fs::write(&short, "id,time,y,x1\na,1,0,1\na,2,0,2\na,3,0,3\n").unwrap();
    let out = ivxj(&["estimate", "--input", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "input");
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    let mut s = String::from("id,time,y,x1\n");
    for id in ["a", "b"] {
        for t in 0..10 {
            s.push_str(&format!("{id},{t},{},{}\n", (t as f64).sin(), if id == "a" { 1.0 } else { 2.0 }));
        }
    }
    fs::write(&flat, s).unwrap();
    let out = ivxj(&["estimate", "--input", flat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "numerical");
}

#[test]
fn lp_with_restrictions_from_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SimulationSpec::univariate(30, 40, 0.0, 0.0, 0.0);
    spec.rho_star = vec![0.9, 0.99];
    spec.beta_star = vec![0.0, 0.0];
    spec.omega = vec![vec![1.0, 0.5, -0.2], vec![0.5, 1.0, 0.1], vec![-0.2, 0.1, 1.0]];
    let panel = simulate_panel(&spec, &mut replication_rng(3, 0, 0)).unwrap();
    let input = dir.path().join("m.csv");
    write_panel_path(&panel, &input).unwrap();
    let rj = dir.path().join("r.json");
    fs::write(&rj, r#"{"a": [[1.0, -1.0]], "q": [0.0]}"#).unwrap();
    let rc = dir.path().join("r.csv");
    fs::write(&rc, "1.0,-1.0,0.0\n").unwrap();

    let a = json(&ivxj(&["lp", "--input", input.to_str().unwrap(), "--horizons", "1,3", "--restrictions", rj.to_str().unwrap()]));
    let b = json(&ivxj(&["lp", "--input", input.to_str().unwrap(), "--horizons", "1,3", "--restrictions", rc.to_str().unwrap()]));
    assert_eq!(a, b);
    let hs = a["horizons"].as_array().unwrap();
    assert_eq!(hs.len(), 2);
    assert_eq!(hs[1]["horizon"], 3);
    assert_eq!(hs[0]["wald"]["df"], 1);
    assert!(hs[0]["wald"]["statistic"]["value"].as_f64().unwrap() >= 0.0);

    // a multivariate estimate is the h = 1 projection
    let e = json(&ivxj(&["estimate", "--input", input.to_str().unwrap(), "--restrictions", rj.to_str().unwrap()]));
    assert_eq!(e["horizons"][0], hs[0]);

    let wrong = dir.path().join("w.json");
    fs::write(&wrong, r#"{"a": [[1.0, -1.0, 2.0]], "q": [0.0]}"#).unwrap();
    let out = ivxj(&["lp", "--input", input.to_str().unwrap(), "--horizons", "1", "--restrictions", wrong.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replicate_tables_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = ivxj(&[
            "replicate-tables",
            "--reps",
            "3",
            "--seed",
            "11",
            "--threads",
            threads,
            "--mult-sizes",
            "30",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let one = run("1", "one");
    let many = run("4", "many");
    for f in ["table_s1_bias.csv", "table_s2_rmse.csv", "table_s3_coverage.csv", "table_multivariate.csv", "univariate_long.csv"] {
        let a = fs::read(one.join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, fs::read(many.join(f)).unwrap(), "{f}");
    }
}
