use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use regkern::bench::{generate_input, InputKind};

fn regkern(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regkern")).args(args).env_remove("REGKERN_THREADS").output().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

/// `y(t) = Σ g_k u(t−k)` plus small noise, written as `t,u,y`.
fn write_dataset(path: &Path, g: &[f64], len: usize, binary: bool) {
    let mut u = generate_input(InputKind::It2, len, 5);
    if binary {
        u.iter_mut().for_each(|x| *x = x.signum());
    }
    let e = generate_input(InputKind::It2, len, 6);
    let mut text = String::from("t,u,y\n");
    for t in 0..len {
        let clean: f64 = g.iter().enumerate().filter(|(k, _)| t > *k).map(|(k, gk)| gk * u[t - 1 - k]).sum();
        text.push_str(&format!("{t},{},{}\n", u[t], clean + 0.1 * e[t]));
    }
    fs::write(path, text).unwrap();
}

fn taps(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.8f64.powi(k as i32)).collect()
}

#[test]
fn estimate_prints_report_without_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_dataset(&data, &taps(10), 400, false);
    let out = regkern(&["estimate", "--data", data.to_str().unwrap(), "--family", "tc", "--criterion", "eb", "--order", "10", "--restarts", "2"]);
    let json = stdout_json(&out);
    assert_eq!(json["eta_hat"].as_array().unwrap().len(), 2);
    assert_eq!(json["criterion_kind"], "EB");
    assert!(json.get("fit").is_none());
    assert_eq!(json["theta_hat"].as_array().unwrap().len(), 10);
}

#[test]
fn oracle_estimate_uses_truth_and_reports_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let truth = dir.path().join("g.json");
    write_dataset(&data, &taps(10), 400, false);
    fs::write(&truth, serde_json::to_string(&taps(10)).unwrap()).unwrap();
    let report = dir.path().join("r.json");
    let out = regkern(&[
        "estimate", "--data", data.to_str().unwrap(), "--criterion", "mseg", "--order", "10", "--sigma2", "0.01",
        "--truth", truth.to_str().unwrap(), "--restarts", "2", "--out", report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert!(json["fit"].as_f64().unwrap() > 90.0);

    let out = regkern(&["estimate", "--data", data.to_str().unwrap(), "--criterion", "mseg", "--order", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"input_kind\": \"IT2\",\n  \"N\": 500,\n  \"num_sytems\": 3\n}\n").unwrap();
    let out = regkern(&["benchmark", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("num_sytems") && err.contains("line 4"), "{err}");

    let data = dir.path().join("d.csv");
    write_dataset(&data, &taps(3), 50, false);
    let out = regkern(&["estimate", "--data", data.to_str().unwrap(), "--family", "xx", "--order", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(regkern(&["estimate"]).status.code(), Some(2));
    assert_eq!(regkern(&["--threads", "0", "rates", "--config", "missing.json"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_dataset(&data, &taps(10), 300, false);
    let opt = dir.path().join("opt.json");
    fs::write(&opt, r#"{"restarts": 1, "max_iters": 1}"#).unwrap();
    let out = regkern(&["estimate", "--data", data.to_str().unwrap(), "--order", "10", "--optimizer", opt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn closed_form_for_an_orthonormal_design() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    // order 1 with a ±1 input has ΦᵀΦ = N exactly
    write_dataset(&data, &[0.7], 200, true);
    let out = regkern(&["closed-form", "--data", data.to_str().unwrap(), "--family", "ridge", "--criterion", "eb", "--order", "1", "--sigma2", "0.01"]);
    let json = stdout_json(&out);
    let eta = json["eta_hat"][0].as_f64().unwrap();
    assert!((eta - 0.49).abs() < 0.05, "{eta}");

    write_dataset(&data, &taps(4), 200, false);
    let out = regkern(&["closed-form", "--data", data.to_str().unwrap(), "--family", "ridge", "--order", "4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn benchmark_writes_its_three_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("it2.json");
    fs::write(
        &cfg,
        r#"{"num_systems": 2, "system_order": 4, "fir_n": 10, "input_kind": "IT2", "N": 120,
            "estimators": ["EB", "SUREy"], "optimizer": {"restarts": 1}}"#,
    )
    .unwrap();
    let mut runs = vec![];
    for (i, threads) in ["1", "2"].iter().enumerate() {
        let out_dir = dir.path().join(format!("out{i}"));
        let out = regkern(&["--threads", threads, "--seed", "4", "--out", out_dir.to_str().unwrap(), "benchmark", "--config", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        for f in ["runs.csv", "summary.json", "boxplot.csv"] {
            assert!(out_dir.join(f).exists(), "{f}");
        }
        // drop the wall-time column before comparing
        let text = fs::read_to_string(out_dir.join("runs.csv")).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let col = rdr.headers().unwrap().iter().position(|h| h == "wall_time_ms").unwrap();
        let rows: Vec<Vec<String>> = rdr
            .records()
            .map(|r| r.unwrap().iter().enumerate().filter(|(j, _)| *j != col).map(|(_, s)| s.to_string()).collect())
            .collect();
        runs.push(rows);
    }
    assert_eq!(runs[0].len(), 4);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn rates_writes_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rates.json");
    fs::write(
        &cfg,
        r#"{"theta0": [1.0, 0.5, 0.25], "sigma2": 0.5, "kernel_family": "ridge", "N_grid": [50, 100, 200],
            "replicates": 20, "bootstrap": 50, "optimizer": {"restarts": 1}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = regkern(&["rates", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("slopes.json")).unwrap()).unwrap();
    for kind in ["EB", "EEB", "SUREg", "SUREy", "MSEg", "MSEy", "EEB-EB"] {
        assert!(json["fitted_slope"].get(kind).is_some(), "{kind}");
    }
    let csv = fs::read_to_string(out_dir.join("rates.csv")).unwrap();
    assert!(csv.starts_with("kind,N,replicate,error\n"));
}
