use std::io::Write;
use std::process::{Command, Output};
use std::sync::Arc;

use robest::family::{Model, NormalLocationScale};
use robest::ic::{IcCache, Neighborhood, SolverConfig};
use serde_json::Value;

fn robest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robest"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut a = args.to_vec();
    a.extend(["--output", "json"]);
    serde_json::from_str(&stdout(&robest(&a))).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

/// Parses an `ic` CSV into rows of numbers, skipping comments and the header.
fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect()
}

fn header_value(text: &str, key: &str) -> f64 {
    let start = text.find(&format!(" {key}=")).unwrap() + key.len() + 2;
    text[start..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn fit_copper_with_median_mad_start() {
    let args = [
        "fit",
        "--model",
        "normal-loc-scale",
        "--neighbor",
        "c",
        "--eps-lower",
        "0.05",
        "--eps-upper",
        "0.20",
        "--start",
        "median-mad",
        "--data",
        "embedded:copper",
    ];
    let v = json(&args);
    let est = &v["estimate"];
    assert!((num(&est[0]) - 3.23).abs() <= 0.05, "{v}");
    assert!((num(&est[1]) - 0.64).abs() <= 0.05, "{v}");
    assert_eq!(v["neighbor"], "c");
    assert!(v["multipliers"]["A"].is_array());
    let human = stdout(&robest(&args));
    assert!(human.contains("3.23") && human.contains("0.64"), "{human}");
}

#[test]
fn fit_polonium_total_variation() {
    let v = json(&[
        "fit",
        "--model",
        "poisson",
        "--neighbor",
        "v",
        "--eps-lower",
        "0.01",
        "--eps-upper",
        "0.05",
        "--data",
        "embedded:polonium",
    ]);
    assert!((num(&v["estimate"][0]) - 3.9133).abs() <= 0.01, "{v}");
    assert_eq!(v["start"]["method"], "cvm");
}

#[test]
fn json_output_round_trips() {
    let out = stdout(&robest(&[
        "fit",
        "--model",
        "normal-loc-scale",
        "--eps-lower",
        "0.05",
        "--eps-upper",
        "0.2",
        "--data",
        "embedded:copper",
        "--output",
        "json",
    ]));
    let parsed: Value = serde_json::from_str(&out).unwrap();
    let mut again = serde_json::to_string_pretty(&parsed).unwrap();
    again.push('\n');
    assert_eq!(again, out);
}

#[test]
fn usage_errors_exit_2() {
    let bad_eps = robest(&[
        "fit",
        "--model",
        "poisson",
        "--eps-lower",
        "0.2",
        "--eps-upper",
        "0.2",
        "--data",
        "embedded:polonium",
    ]);
    assert_eq!(bad_eps.status.code(), Some(2));
    assert_eq!(robest(&["fit", "--model", "poisson"]).status.code(), Some(2));
    let mad = robest(&[
        "fit",
        "--model",
        "poisson",
        "--eps-lower",
        "0.01",
        "--eps-upper",
        "0.05",
        "--start",
        "median-mad",
        "--data",
        "embedded:polonium",
    ]);
    assert_eq!(mad.status.code(), Some(2));
    let theta = robest(&["cniper", "--model", "normal-loc-scale", "--theta", "3.2", "--size", "0.1", "--n", "24"]);
    assert_eq!(theta.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::File::create(&bad).unwrap().write_all(b"value\n1.0\n2.5\nx7\n").unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::File::create(&empty).unwrap();
    let negative = dir.path().join("neg.csv");
    std::fs::File::create(&negative).unwrap().write_all(b"0,4\n1,-2\n").unwrap();
    let fit = |path: &std::path::Path| {
        robest(&[
            "fit",
            "--model",
            "normal-loc-scale",
            "--eps-lower",
            "0.05",
            "--eps-upper",
            "0.2",
            "--data",
            path.to_str().unwrap(),
        ])
    };
    let out = fit(&bad);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    assert_eq!(fit(&empty).status.code(), Some(3));
    let out = fit(&negative);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(fit(std::path::Path::new("/no/such/file.csv")).status.code(), Some(3));
}

#[test]
fn user_supplied_frequency_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.csv");
    std::fs::File::create(&path)
        .unwrap()
        .write_all(b"count,frequency\n0,10\n1,19\n2,17\n3,9\n4,3\n6,1\n")
        .unwrap();
    let v = json(&[
        "fit",
        "--model",
        "poisson",
        "--eps-lower",
        "0.01",
        "--eps-upper",
        "0.1",
        "--start",
        "mle",
        "--data",
        path.to_str().unwrap(),
    ]);
    assert_eq!(v["data"]["n"], 59);
    assert!(num(&v["shift"][0]).abs() <= num(&v["multipliers"]["b"]));
}

#[test]
fn ic_grid_for_copper_is_bounded_and_redescending() {
    let text = stdout(&robest(&[
        "ic",
        "--model",
        "normal-loc-scale",
        "--data",
        "embedded:copper",
        "--start",
        "median-mad",
        "--eps-lower",
        "0.05",
        "--eps-upper",
        "0.2",
        "--grid",
        "101",
    ]));
    let b = header_value(&text, "b");
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 101);
    let loc: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    for r in &rows {
        assert!((r[1] * r[1] + r[2] * r[2]).sqrt() <= b * (1.0 + 1e-12));
    }
    let peak = loc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(loc[100] < 0.9 * peak, "location column does not redescend");
    assert!(loc[0] > -0.9 * peak);
}

#[test]
fn ic_single_point_matches_direct_evaluation() {
    let text = stdout(&robest(&[
        "ic",
        "--model",
        "normal-loc-scale",
        "--theta",
        "3.2,0.7",
        "--radius",
        "0.5",
        "--grid",
        "1",
    ]));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    let model: Model = Arc::new(NormalLocationScale);
    let (ic, _) = IcCache::new()
        .solve(&model, &[3.2, 0.7], 0.5, Neighborhood::Contamination, &SolverConfig::default())
        .unwrap();
    let median = model.quantile(&[3.2, 0.7], 0.5);
    let psi = ic.eval(median).unwrap();
    assert_eq!(rows[0][0].to_bits(), median.to_bits());
    assert_eq!(rows[0][1].to_bits(), psi[0].to_bits());
    assert_eq!(rows[0][2].to_bits(), psi[1].to_bits());
}

#[test]
fn poisson_grids_respect_their_clipping() {
    let grid = |nb: &str| {
        stdout(&robest(&[
            "ic", "--model", "poisson", "--neighbor", nb, "--theta", "3.9", "--radius", "0.5",
        ]))
    };
    let c = grid("c");
    let b = header_value(&c, "b");
    for r in csv_rows(&c) {
        assert!(r[1].abs() <= b * (1.0 + 1e-12));
    }
    let v = grid("v");
    let (b, lower) = (header_value(&v, "b"), header_value(&v, "c"));
    for r in csv_rows(&v) {
        assert!(r[1] >= lower && r[1] <= lower + b * (1.0 + 1e-12), "{r:?}");
    }
}

#[test]
fn cniper_reference_triples() {
    let cases: [(&[&str], f64, f64, f64, f64, f64); 3] = [
        (&["--model", "normal-loc-scale", "--theta", "3.2,0.7", "--size", "0.10", "--n", "24"], 1.86, 4.54, 0.01, 5.56, 0.1),
        (&["--model", "gamma", "--theta", "5.0,1.9", "--size", "0.025", "--n", "201"], 0.62, 29.31, 0.05, 2.63, 0.1),
        (&["--model", "poisson", "--theta", "3.9", "--size", "0.03", "--n", "2608"], 1.26, 6.54, 0.01, 20.0, 0.2),
    ];
    for (flags, lo, up, up_tol, pct, pct_tol) in cases {
        let mut args = vec!["cniper"];
        args.extend_from_slice(flags);
        let v = json(&args);
        let r = &v["report"]["rounded"];
        assert!((num(&r["lower_point"]) - lo).abs() <= 0.01 + 1e-9, "{v}");
        assert!((num(&r["upper_point"]) - up).abs() <= up_tol + 1e-9, "{v}");
        assert!((100.0 * num(&r["prob_ideal"]) - pct).abs() <= pct_tol, "{v}");
    }
    let human = stdout(&robest(&[
        "cniper", "--model", "normal-loc-scale", "--theta", "3.2,0.7", "--size", "0.10", "--n", "24",
    ]));
    assert!(human.contains("1.86, 4.54") && human.contains("5.56%"), "{human}");
}

#[test]
fn simulate_is_reproducible() {
    let args = [
        "simulate", "--model", "poisson", "--theta", "3.9", "--size", "0.03", "--dirac", "8", "--n", "50", "--reps",
        "100", "--seed", "42", "--estimators", "mle,rmx", "--eps-lower", "0.01", "--eps-upper", "0.05",
    ];
    assert_eq!(stdout(&robest(&args)), stdout(&robest(&args)));
}

#[test]
fn simulate_near_efficiency_at_the_model() {
    let v = json(&[
        "simulate", "--model", "normal-loc-scale", "--theta", "3.2,0.7", "--n", "400", "--reps", "400", "--seed", "7",
        "--estimators", "mle,rmx", "--eps-lower", "0.0", "--eps-upper", "0.02",
    ]);
    let rows = v["table"]["rows"].as_array().unwrap();
    let (mle, rmx) = (num(&rows[0]["n_mse"]), num(&rows[1]["n_mse"]));
    assert!(rmx <= 1.25 * mle, "rmx {rmx} vs mle {mle}");
}

#[test]
fn simulate_outlier_scenario_favours_rmx() {
    let v = json(&[
        "simulate", "--model", "normal-loc-scale", "--theta", "3.2,0.7", "--size", "0.1", "--dirac", "28.95", "--n",
        "24", "--reps", "300", "--seed", "1", "--estimators", "mle,rmx", "--eps-lower", "0.05", "--eps-upper", "0.2",
    ]);
    let rows = v["table"]["rows"].as_array().unwrap();
    assert!(num(&rows[1]["n_mse"]) < num(&rows[0]["n_mse"]));
    assert_eq!(rows[1]["shift_violations"], 0);
}
