use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_RUN: &str = r#"
schema_version = 1
[physics]
field_gauss = 233.0
nv_depth_nm = 10.0
[targets]
density_per_nm2 = 0.1
rmax_factor = 3.0
[sequence]
tau_ns = 900.0
rabi_mhz = 5.0
[sequence.sweep]
kind = "ts"
values = [50.0, 100.0, 150.0, 200.0]
[engine]
kind = "analytic"
n_realizations = 6
seed = 5
"#;

fn nvdeer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvdeer")).args(args).env_remove("NVDEER_OUT_DIR").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn estimate_density_reports_json() {
    let out = nvdeer(&["estimate-density", "--min-signal", "0.5", "--tau-ns", "900"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["command"], "estimate-density");
    let direct = nvdeer::analysis::estimate_density(0.5, 12.0, 900.0).unwrap();
    assert_eq!(v["result"]["sigma_hat_per_nm2"].as_f64().unwrap(), direct.sigma_hat_per_nm2);
}

#[test]
fn exit_codes_separate_bad_input_from_other_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    assert_eq!(nvdeer(&["simulate", "--config", path(&missing)]).status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL_RUN.replace("field_gauss = 233.0", "field_gauss = -1.0")).unwrap();
    let out = nvdeer(&["simulate", "--config", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("field"));

    assert_eq!(nvdeer(&["estimate-density", "--min-signal", "-0.2", "--tau-ns", "900"]).status.code(), Some(2));
}

#[test]
fn simulate_writes_identical_csv_for_identical_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let mut csvs = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "2")] {
        let out_dir = dir.path().join(tag);
        let out = nvdeer(&["simulate", "--quiet", "--config", path(&cfg), "--threads", threads, "--out", path(&out_dir)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
        csvs.push(std::fs::read(out_dir.join("run.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);

    let other = dir.path().join("c");
    nvdeer(&["simulate", "--quiet", "--config", path(&cfg), "--seed", "6", "--out", path(&other)]);
    assert_ne!(std::fs::read(other.join("run.csv")).unwrap(), csvs[0]);

    let curve = nvdeer::analysis::DeerCurve::read_csv_path(nvdeer::analysis::AxisKind::TsNs, &dir.path().join("a/run.csv")).unwrap();
    assert_eq!(curve.xs(), vec![50.0, 100.0, 150.0, 200.0]);
}

#[test]
fn fit_lorentzian_reads_a_curve_csv() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = (0..41).map(|i| 612.0 + 2.0 * i as f64).collect();
    let y: Vec<f64> = x.iter().map(|&f| 0.9 - 0.3 / (1.0 + (2.0 * (f - 650.0) / 18.0).powi(2))).collect();
    let curve = nvdeer::analysis::DeerCurve::from_xy(nvdeer::analysis::AxisKind::FrequencyMhz, &x, &y).unwrap();
    let csv = dir.path().join("spectrum.csv");
    curve.write_csv(std::fs::File::create(&csv).unwrap()).unwrap();

    let out_dir = dir.path().join("out");
    let out = nvdeer(&["fit-lorentzian", "--curve", path(&csv), "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let names: Vec<&str> = v["result"]["names"].as_array().unwrap().iter().map(|n| n.as_str().unwrap()).collect();
    let values = v["result"]["values"].as_array().unwrap();
    let center = values[names.iter().position(|n| *n == "center").unwrap()].as_f64().unwrap();
    assert!((center - 650.0).abs() < 1e-6);
    let stored: Value = serde_json::from_slice(&std::fs::read(out_dir.join("fit-lorentzian.json")).unwrap()).unwrap();
    assert_eq!(stored, v);
}

#[test]
fn fit_relax_reads_two_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("relax.csv");
    let mut text = String::from("time_us,value\n");
    for i in 0..60 {
        let t = 0.05 * 1.08f64.powi(i);
        text.push_str(&format!("{t},{}\n", 0.3 * (-t / 0.4).exp() + 0.7 * (-t / 3.0).exp() + 0.02));
    }
    std::fs::write(&data, text).unwrap();
    let out = nvdeer(&["fit-relax", "--data", path(&data)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["result"]["converged"].as_bool().unwrap());
}
