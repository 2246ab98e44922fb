use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bosefield")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of a CSV table as (header, rows), skipping `#` lines.
fn csv(o: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    let text = stdout(o);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn li3(r: f64) -> f64 {
    (1..20_000).map(|k| r.powi(k) / (k as f64).powi(3)).sum()
}

#[test]
fn phase_diagram_single_condensed_point() {
    let o = run(&["phase-diagram", "--mu", "2"]);
    assert!(o.status.success());
    let (h, rows) = csv(&o);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][column(&h, "phase")], "condensed");
    assert_eq!(rows[0][column(&h, "rho_total")].parse::<f64>().unwrap(), 2.0);
    assert_eq!(rows[0][column(&h, "r_star")], "");
}

#[test]
fn phase_diagram_sweep_follows_polylog_below_critical() {
    let o = run(&["phase-diagram", "--mu-range", "0.5,2.0,7"]);
    assert!(o.status.success());
    let (h, rows) = csv(&o);
    assert_eq!(rows.len(), 7);
    let mu_c = rows[0][column(&h, "mu_c")].parse::<f64>().unwrap();
    assert!((mu_c - 1.2020569031595942).abs() < 1e-15);
    for r in &rows {
        let mu: f64 = r[column(&h, "mu")].parse().unwrap();
        let rho: f64 = r[column(&h, "rho_total")].parse().unwrap();
        if mu < mu_c {
            let rs: f64 = r[column(&h, "r_star")].parse().unwrap();
            assert!((rs.ln() + li3(rs) - mu).abs() < 1e-10);
            assert!((rho - li3(rs)).abs() < 1e-10);
        } else {
            assert!((rho - mu).abs() < 1e-15);
        }
    }
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let o = run(&["phase-diagram", "--mu", "0.5"]);
    let (h, rows) = csv(&o);
    let cell = &rows[0][column(&h, "r_star")];
    let mantissa = cell.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{cell}");
}

#[test]
fn empty_grid_is_a_usage_error() {
    assert_eq!(run(&["phase-diagram"]).status.code(), Some(1));
    assert_eq!(run(&["phase-diagram", "--mu-range", "0,1,0"]).status.code(), Some(1));
}

#[test]
fn invalid_values_are_usage_errors() {
    assert_eq!(run(&["genfun", "--mu", "1", "--beta", "-1"]).status.code(), Some(1));
    assert_eq!(run(&["convergence", "--mu", "1", "--kappa-list", "3,2"]).status.code(), Some(1));
    assert_eq!(run(&["genfun", "--mu", "1", "--f-bump", "0,1"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn convergence_single_kappa_has_no_trend_flag() {
    let o = run(&["convergence", "--mu", "2", "--kappa", "3"]);
    assert!(o.status.success());
    let (h, rows) = csv(&o);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][column(&h, "approaching")], "");
}

#[test]
fn convergence_normal_phase_approaches_r_star() {
    let o = run(&["convergence", "--mu", "-0.1559340", "--kappa-list", "10,20,40"]);
    assert!(o.status.success());
    let (h, rows) = csv(&o);
    let gaps: Vec<f64> = rows.iter().map(|r| r[column(&h, "limit_gap")].parse().unwrap()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(rows[2][column(&h, "approaching")], "true");
}

#[test]
fn genfun_json_brute_force() {
    let o = run(&["genfun", "--mu", "-0.5", "--kappa", "2", "--n-max", "60", "--grid-nodes", "4", "--format", "json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let row = &v["rows"][0];
    assert_eq!(row["method"], "brute-force");
    let g = row["genfun"].as_f64().unwrap();
    assert!(0.0 < g && g < 1.0);
    assert_eq!(v["config"]["n_max"], 60);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"mu": 2.0, "beta": 1.0, "format": "json"}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let from_file: Value = serde_json::from_str(&stdout(&run(&["phase-diagram", "--config", c]))).unwrap();
    assert_eq!(from_file["rows"][0]["mu"], 2.0);
    let o = run(&["phase-diagram", "--config", c, "--mu", "0.5", "--format", "csv"]);
    let (h, rows) = csv(&o);
    assert_eq!(rows[0][column(&h, "phase")], "normal");

    std::fs::write(&cfg, r#"{"mu": 2.0, "temperature": 3}"#).unwrap();
    assert_eq!(run(&["phase-diagram", "--config", c]).status.code(), Some(1));
}

#[test]
fn unwritable_output_reports_the_path() {
    let o = run(&["phase-diagram", "--mu", "1", "--out", "/nonexistent-dir/table.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/table.csv"));
}

fn sample_to(path: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["sample", "--kappa", "1", "--mu", "0", "--n-max", "12", "--seed", "11", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn sampling_is_deterministic_and_summarised() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let oa = sample_to(&a, &["--steps", "30000"]);
    assert!(oa.status.success());
    assert!(sample_to(&b, &["--steps", "30000"]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let text = std::fs::read_to_string(&a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 1 + 12 * 3);
    let records: Vec<&str> = lines.collect();
    assert_eq!(records.len(), 2000);
    for r in &records {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f.len(), 1 + 3 * f[0].parse::<usize>().unwrap());
    }

    let s: Value = serde_json::from_str(String::from_utf8_lossy(&oa.stderr).trim()).unwrap();
    assert_eq!(s["samples"], 2000);
    let (m, se, exact) =
        (s["mean_n"].as_f64().unwrap(), s["mean_n_std_error"].as_f64().unwrap(), s["exact_mean_n"].as_f64().unwrap());
    assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} (se {se})");
}

#[test]
fn sampling_without_steps_after_burn_in_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.json");
    let o = sample_to(&p, &["--steps", "10000", "--format", "json"]);
    assert!(o.status.success());
    let dump: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(dump.as_array().unwrap().len(), 0);
    let s: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(s["insufficient_samples"], true);
}

#[test]
fn sampling_json_records_have_points_of_dimension_d() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    assert!(sample_to(&p, &["--steps", "10500", "--format", "json"]).status.success());
    let dump: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    for rec in dump.as_array().unwrap() {
        let pts = rec["points"].as_array().unwrap();
        assert_eq!(pts.len() as u64, rec["n"].as_u64().unwrap());
        assert!(pts.iter().all(|q| q.as_array().unwrap().len() == 3));
    }
}

#[test]
fn oversized_configurations_are_numerical_errors() {
    let o = run(&["sample", "--kappa", "3", "--mu", "2", "--steps", "10100"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes_and_tolerance_injection_fails() {
    let o = run(&["verify"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let (h, rows) = csv(&o);
    assert!(rows.len() > 30);
    assert!(stdout(&o).contains("kei1"));
    let _ = column(&h, "passed");

    let bad = run(&["verify", "--tol", "1e-300"]);
    assert_eq!(bad.status.code(), Some(3));
}
