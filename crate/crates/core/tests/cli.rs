//! End-to-end tests of the `qpfer` binary: exit codes, report structure,
//! config-file precedence, and byte-level reproducibility across worker
//! counts.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qpfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpfer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&output.stdout)
        )
    })
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("not killed by a signal")
}

#[test]
fn rates_reports_the_decode_transform() {
    let output = qpfer(&["rates", "--channel", "0.61,0.13,0.13,0.13", "--seed", "1"]);
    assert_eq!(exit_code(&output), 0);
    let json = stdout_json(&output);

    assert_eq!(json["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(json["seed"], 1);
    let hash = json["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));

    assert!((json["survival"].as_f64().unwrap() - 0.6152).abs() < 1e-12);
    assert!((json["decoded"]["p_i"].as_f64().unwrap() - 0.632315).abs() < 1e-4);
    assert!((json["decoded"]["p_x"].as_f64().unwrap() - 0.257803).abs() < 1e-4);
    assert!((json["bit_flip_rate"].as_f64().unwrap() - 0.312744).abs() < 1e-4);
    assert!((json["phase_flip_rate"].as_f64().unwrap() - 0.109883).abs() < 1e-4);
    assert!(json["monte_carlo"].is_null());
}

#[test]
fn rates_cross_check_stays_close() {
    let output = qpfer(&[
        "rates",
        "--channel",
        "0.61,0.13,0.13,0.13",
        "--mc-samples",
        "100000",
        "--seed",
        "2",
    ]);
    assert_eq!(exit_code(&output), 0);
    let json = stdout_json(&output);
    let mc = &json["monte_carlo"];
    assert_eq!(mc["samples"], 100000);
    assert!(mc["max_abs_difference"].as_f64().unwrap() < 0.01);
}

#[test]
fn schedule_search_reports_infeasible_points_with_exit_three() {
    let output = qpfer(&["schedule", "--dist", "0.577373,0.312744,0,0.109883"]);
    assert_eq!(exit_code(&output), 3);
    let json = stdout_json(&output);
    assert_eq!(json["feasible"], false);
    assert!(json["schedule"].is_null());
}

#[test]
fn schedule_apply_evaluates_a_fixed_plan() {
    let output = qpfer(&[
        "schedule",
        "--dist",
        "0.9,0.05,0.02,0.03",
        "--steps",
        "B",
        "--final-r",
        "3",
    ]);
    assert_eq!(exit_code(&output), 0);
    let json = stdout_json(&output);
    assert_eq!(json["mode"], "apply");
    assert_eq!(json["feasible"], true);
    assert_eq!(json["schedule"]["steps"][0], "B");
    assert_eq!(json["schedule"]["final_r"], 3);
    assert!(json["key_rate"].as_f64().unwrap() > 0.0);
    assert!(json["expected_bit_yield"].as_f64().unwrap() > 0.0);
}

#[test]
fn threshold_certifies_within_the_reference_band() {
    let output = qpfer(&[
        "threshold",
        "--family",
        "symmetric",
        "--variant",
        "four-state",
        "--precision",
        "0.01",
        "--skip-baseline",
    ]);
    assert_eq!(exit_code(&output), 0);
    let json = stdout_json(&output);
    let certified = json["decode"]["certified_scale"].as_f64().unwrap();
    assert!((0.2..0.3).contains(&certified), "certified {certified}");
    assert_eq!(json["comparison"]["within_band"], true);
    assert!(json["baseline"].is_null());
    assert!(json["decode"]["witness"]["key_rate"].as_f64().unwrap() > 0.0);
    let statement = String::from_utf8_lossy(&output.stderr);
    assert!(statement.contains("reference"), "stderr: {statement}");
}

#[test]
fn simulate_aborts_under_interception_with_exit_two() {
    let output = qpfer(&[
        "simulate",
        "--variant",
        "four-state",
        "--n-codes",
        "50000",
        "--channel",
        "1,0,0,0",
        "--attack",
        "intercept-resend-z",
        "--seed",
        "5",
    ]);
    assert_eq!(exit_code(&output), 2);
    let json = stdout_json(&output);
    assert_eq!(json["abort"], true);
    assert!(json["rates"]["bit"]["rate"].as_f64().unwrap() > 0.3);
}

#[test]
fn invalid_input_exits_with_four() {
    let bad_channel = qpfer(&["rates", "--channel", "0.5,0.4,0.2,0.1"]);
    assert_eq!(exit_code(&bad_channel), 4);
    assert!(bad_channel.stdout.is_empty());
    assert!(String::from_utf8_lossy(&bad_channel.stderr).contains("error"));

    let missing_channel = qpfer(&["rates"]);
    assert_eq!(exit_code(&missing_channel), 4);

    let unknown_flag = qpfer(&["rates", "--no-such-flag"]);
    assert_eq!(exit_code(&unknown_flag), 4);

    let steps_without_width = qpfer(&["schedule", "--dist", "1,0,0,0", "--steps", "B"]);
    assert_eq!(exit_code(&steps_without_width), 4);

    let help = qpfer(&["--help"]);
    assert_eq!(exit_code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("simulate"));
}

#[test]
fn worker_count_never_changes_output_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for workers in ["1", "3"] {
        let records = dir.path().join(format!("records-{workers}.csv"));
        let output = qpfer(&[
            "simulate",
            "--variant",
            "six-state",
            "--n-codes",
            "20000",
            "--channel",
            "0.91,0.03,0.03,0.03",
            "--seed",
            "17",
            "--workers",
            workers,
            "--records",
            records.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&output), 0, "workers={workers}");
        runs.push((output.stdout, std::fs::read(&records).unwrap()));
    }
    assert_eq!(runs[0].0, runs[1].0, "reports differ across worker counts");
    assert_eq!(runs[0].1, runs[1].1, "records differ across worker counts");
}

#[test]
fn records_csv_carries_the_banner_and_one_row_per_code() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.csv");
    let output = qpfer(&[
        "simulate",
        "--variant",
        "four-state",
        "--n-codes",
        "500",
        "--channel",
        "1,0,0,0",
        "--seed",
        "8",
        "--records",
        records.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0);
    let json = stdout_json(&output);
    let hash = json["config_hash"].as_str().unwrap();

    let text = std::fs::read_to_string(&records).unwrap();
    let mut lines = text.lines();
    let banner = lines.next().unwrap();
    assert!(banner.starts_with("# tool_version="));
    assert!(banner.contains(&format!("config_hash={hash}")));
    assert!(banner.contains("seed=8"));
    assert_eq!(
        lines.next().unwrap(),
        "index,prep_basis,meas_basis,alice_bit,bob_bit,accepted"
    );
    assert_eq!(lines.count(), 500);
}

#[test]
fn config_file_fills_in_what_flags_leave_out() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("experiment.toml");
    std::fs::write(
        &path,
        r#"
seed = 11

[rates]
channel = { p_i = 0.61, p_x = 0.13, p_y = 0.13, p_z = 0.13 }

[simulate]
variant = "four-state"
n_codes = 1000
channel = { p_i = 0.97, p_x = 0.01, p_y = 0.01, p_z = 0.01 }
"#,
    )
    .unwrap();
    let config = path.to_str().unwrap();

    let from_file = qpfer(&["rates", "--config", config]);
    assert_eq!(exit_code(&from_file), 0);
    let json = stdout_json(&from_file);
    assert_eq!(json["seed"], 11);
    assert!((json["survival"].as_f64().unwrap() - 0.6152).abs() < 1e-12);

    let overridden = qpfer(&[
        "simulate",
        "--config",
        config,
        "--n-codes",
        "2000",
        "--seed",
        "23",
    ]);
    assert_eq!(exit_code(&overridden), 0);
    let json = stdout_json(&overridden);
    assert_eq!(json["counts"]["sent"], 2000);
    assert_eq!(json["seed"], 23);

    let file_seed = qpfer(&["simulate", "--config", config]);
    assert_eq!(exit_code(&file_seed), 0);
    assert_eq!(stdout_json(&file_seed)["seed"], 11);

    let unknown_key = dir.path().join("bad.toml");
    std::fs::write(&unknown_key, "no_such_section = 1\n").unwrap();
    let rejected = qpfer(&["rates", "--config", unknown_key.to_str().unwrap()]);
    assert_eq!(exit_code(&rejected), 4);
}

#[test]
fn optics_check_emits_a_full_sweep_table() {
    let output = qpfer(&["optics-check", "--variant", "four-state", "--seed", "9"]);
    assert_eq!(exit_code(&output), 0);
    let text = String::from_utf8(output.stdout).unwrap();
    let mut lines = text.lines();
    let banner = lines.next().unwrap();
    assert!(banner.starts_with("# tool_version="));
    assert!(banner.contains("seed=9"));
    assert_eq!(
        lines.next().unwrap(),
        "code_state,e1,e2,outcome,p_optics,p_abstract,deviation"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 320);
    for row in rows {
        let deviation: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(deviation.abs() <= 1e-12);
    }
    let summary = String::from_utf8_lossy(&output.stderr);
    assert!(summary.contains("max deviation"), "stderr: {summary}");
}

#[test]
fn output_files_match_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let to_stdout = qpfer(&["rates", "--channel", "0.61,0.13,0.13,0.13", "--seed", "4"]);
    let to_file = qpfer(&[
        "rates",
        "--channel",
        "0.61,0.13,0.13,0.13",
        "--seed",
        "4",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&to_file), 0);
    assert!(to_file.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), to_stdout.stdout);
    assert!(Path::new(&path).exists());
}
