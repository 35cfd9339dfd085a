use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dprss(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dprss"))
        .args(args)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn fit_collinear_huge_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "x,y\n0,0.2\n0.5,0.45\n1,0.7\n").unwrap();
    for mech in ["dp_rss", "dp_ss"] {
        let v = stdout_json(&dprss(
            dir.path(),
            &["fit", "--input", "d.csv", "--mechanism", mech, "--epsilon", "1e6", "--seed", "42"],
        ));
        assert_eq!(v["mechanism"], mech);
        assert_eq!(v["seed"], 42);
        assert_eq!(v["fallback"], false);
        assert!((v["alpha_hat"].as_f64().unwrap() - 0.5).abs() < 1e-2, "{mech}: {v}");
        assert!((v["beta_hat"].as_f64().unwrap() - 0.2).abs() < 1e-2, "{mech}: {v}");
    }
}

#[test]
fn fit_header_only_is_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.csv"), "x,y\n").unwrap();
    let mut fallbacks = 0;
    for seed in 0..50 {
        let s = seed.to_string();
        let v = stdout_json(&dprss(
            dir.path(),
            &["fit", "--input", "e.csv", "--mechanism", "dp_rss", "--epsilon", "1", "--seed", &s],
        ));
        if v["fallback"] == true {
            fallbacks += 1;
            assert_eq!(v["alpha_hat"], 0.0);
            assert_eq!(v["beta_hat"], 0.5);
        }
    }
    assert!(fallbacks >= 40, "{fallbacks} of 50");
}

#[test]
fn fit_with_bounds_denormalizes() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..=10).map(|i| format!("{i},{}\n", 5.0 * i as f64 + 20.0)).collect();
    std::fs::write(dir.path().join("b.csv"), format!("x,y\n{rows}")).unwrap();
    let v = stdout_json(&dprss(
        dir.path(),
        &[
            "fit", "--input", "b.csv", "--mechanism", "dp_rss", "--epsilon", "1e7", "--x-min", "0", "--x-max", "10",
            "--y-min", "0", "--y-max", "100",
        ],
    ));
    assert!((v["alpha_hat"].as_f64().unwrap() - 5.0).abs() < 0.05, "{v}");
    assert!((v["beta_hat"].as_f64().unwrap() - 20.0).abs() < 0.5, "{v}");

    let v = stdout_json(&dprss(
        dir.path(),
        &[
            "fit", "--input", "b.csv", "--mechanism", "dp_rss_poly", "--degree", "2", "--epsilon", "1e8", "--x-min",
            "0", "--x-max", "10", "--y-min", "0", "--y-max", "100",
        ],
    ));
    let c: Vec<f64> = v["coeffs"].as_array().unwrap().iter().map(|c| c.as_f64().unwrap()).collect();
    assert_eq!(c.len(), 3);
    assert!(c[0].abs() < 0.05 && (c[1] - 5.0).abs() < 0.5 && (c[2] - 20.0).abs() < 1.0, "{c:?}");
}

#[test]
fn fit_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "x,y\n0.1,0.2\n0.2,oops\n").unwrap();
    let out = dprss(dir.path(), &["fit", "--input", "bad.csv", "--mechanism", "dp_rss", "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    std::fs::write(dir.path().join("oob.csv"), "x,y\n0.1,0.2\n0.3,1.4\n").unwrap();
    let out = dprss(dir.path(), &["fit", "--input", "oob.csv", "--mechanism", "dp_ss", "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));

    let out = dprss(dir.path(), &["fit", "--input", "oob.csv", "--mechanism", "dp_magic", "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = dprss(
        dir.path(),
        &["fit", "--input", "oob.csv", "--mechanism", "dp_rss", "--epsilon", "1", "--x-min", "0"],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = dprss(dir.path(), &["fit", "--input", "missing.csv", "--mechanism", "dp_rss", "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_output_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "x,y\n0,0.2\n1,0.7\n").unwrap();
    let out = dprss(
        dir.path(),
        &["fit", "--input", "d.csv", "--mechanism", "dp_theil_sen", "--epsilon", "3", "--seed", "9", "--output", "f.json"],
    );
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let fit: Value = serde_json::from_slice(&std::fs::read(dir.path().join("f.json")).unwrap()).unwrap();
    assert_eq!(fit["mechanism"], "dp_theil_sen");
    let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join("f.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "fit");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["budget"], 3.0);
    assert_eq!(m["mechanism"], "dp_theil_sen");
    assert_eq!(m["timestamp"], "2023-11-14T22:13:20Z");
    assert_eq!(m["output_paths"], serde_json::json!(["f.json"]));
}

fn config(extra: &str) -> String {
    format!(r#"{{"n": 300, "alpha": -0.7, "beta": 0.8, "sigma": 0.05, "seed": 4, "epsilons": [0.5, 2]{extra}}}"#)
}

#[test]
fn experiment_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), config(r#", "iterations": 1, "methods": ["dp_ss", "dp_rss"]"#)).unwrap();
    let out = dprss(dir.path(), &["experiment", "--config", "c.json", "--output", "r.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(!text.contains('\r'));
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.join(","), "method,epsilon,mean_l1,std_l1,mean_l2,std_l2,median_l1,median_l2");
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (&r[0], &r[1])).collect();
    assert_eq!(keys, [("dp_rss", "0.5"), ("dp_rss", "2"), ("dp_ss", "0.5"), ("dp_ss", "2")]);
    for r in &rows {
        assert_eq!(&r[3], "NA");
        assert_eq!(&r[5], "NA");
        assert_eq!(r[2], r[6]);
        assert!(r[2].parse::<f64>().unwrap() >= 0.0);
    }
    let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "experiment");
    assert_eq!(m["mechanism"], "dp_rss,dp_ss");
    assert_eq!(m["seed"], 4);
}

#[test]
fn experiment_config_errors_name_field() {
    let dir = tempfile::tempdir().unwrap();
    for (extra, field) in [
        (r#", "iterations": 0"#, "iterations"),
        (r#", "iterations": 2, "methods": ["ols"]"#, "methods"),
        (r#", "iterations": 2, "sigmaa": 1"#, "sigmaa"),
        (r#""#, "iterations"),
    ] {
        std::fs::write(dir.path().join("c.json"), config(extra)).unwrap();
        let out = dprss(dir.path(), &["experiment", "--config", "c.json", "--output", "r.csv"]);
        assert_eq!(out.status.code(), Some(1));
        assert!(stderr(&out).contains(&format!("`{field}`")), "{field}: {}", stderr(&out));
        assert!(!dir.path().join("r.csv").exists());
    }
}

#[test]
fn verify_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dprss(dir.path(), &["verify", "--epsilon", "0.5", "--trials", "100000", "--seed", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>().join(","),
        "statistic,method,empirical_var,theoretical_var,relative_error,improvement_ratio"
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    let theory: Vec<(String, String, f64)> = rows
        .iter()
        .map(|r| (r[0].to_string(), r[1].to_string(), r[3].parse().unwrap()))
        .collect();
    let want_rss = [48.0, 80.0 / 3.0, 80.0 / 3.0, 128.0 / 3.0, 128.0 / 3.0];
    let want_ss = [64.0, 128.0, 128.0, 128.0, 128.0];
    for (k, stat) in ["n", "S_x2", "S_xy", "S_x", "S_y"].iter().enumerate() {
        let get = |m: &str| theory.iter().find(|t| t.0 == *stat && t.1 == m).unwrap().2;
        assert!((get("dp_rss") - want_rss[k]).abs() < 1e-9);
        assert!((get("dp_ss") - want_ss[k]).abs() < 1e-9);
    }

    let out = dprss(dir.path(), &["verify", "--trials", "99999"]);
    assert_eq!(out.status.code(), Some(2));
}
