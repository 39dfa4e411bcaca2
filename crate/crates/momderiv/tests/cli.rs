//! End-to-end tests of the command-line interface: exit codes, JSON
//! schemas with fully resolved configuration, CSV shapes, and replayability
//! of seeded commands.

use std::path::Path;
use std::process::{Command, Output};

use momderiv::data::Dataset;
use momderiv::mc::dgp_sample;
use nalgebra::DMatrix;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_momderiv"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(output: &Output) -> Value {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

/// Writes a simulated dataset with columns (y, x) to `dir` and returns its
/// path as a string.  The simulated design carries its own intercept
/// column; the file keeps only the covariate so `--intercept` on the
/// command line supplies the constant.
fn sample_csv(dir: &Path, n: usize, seed: u64) -> String {
    let data = dgp_sample(n, seed).expect("simulate");
    let covariate = DMatrix::from_fn(n, 1, |i, _| data.x()[(i, 1)]);
    let slim = Dataset::with_response_name(
        data.y().clone(),
        covariate,
        vec!["x".to_string()],
        "y".to_string(),
    )
    .expect("dataset");
    let path = dir.join(format!("sample_{n}_{seed}.csv"));
    slim.write_csv(&path).expect("write csv");
    path.to_string_lossy().into_owned()
}

// ════════════════════════════════════════════════════════════════════════
// Exit codes
// ════════════════════════════════════════════════════════════════════════

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["qr-deriv", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    // Unknown flags and missing required arguments.
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["qr-fit", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["simulate"]).status.code(), Some(1));
    // Semantically rejected values.
    assert_eq!(
        run(&["simulate", "--table", "9", "--reps", "1"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--threads", "0", "simulate", "--table", "1"]).status.code(), Some(1));
}

#[test]
fn rejected_argument_values_exit_one() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = sample_csv(dir.path(), 60, 1);
    let base = ["--data", csv.as_str(), "--response", "y", "--intercept"];

    // Quantile level outside (0, 1).
    let mut args = vec!["qr-fit"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--u", "1.5"]);
    assert_eq!(run(&args).status.code(), Some(1));

    // Covariate profile of the wrong length.
    let mut args = vec!["cdf"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--x", "1,1,1", "--y", "0.0"]);
    assert_eq!(run(&args).status.code(), Some(1));

    // qr-model density without an outcome level.
    let mut args = vec!["density"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--model", "qr", "--x", "1,1", "--h", "0.5"]);
    assert_eq!(run(&args).status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_two() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = sample_csv(dir.path(), 60, 2);

    // Nonexistent input file.
    let missing = dir.path().join("missing.csv");
    let missing = missing.to_string_lossy();
    let output = run(&[
        "qr-fit", "--data", &missing, "--response", "y", "--intercept", "--u", "0.5",
    ]);
    assert_eq!(output.status.code(), Some(2));

    // Separated distribution regression: a threshold beyond every response.
    let output = run(&[
        "dr-fit", "--data", &csv, "--response", "y", "--intercept", "--u", "-1e6",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("separation"));
}

// ════════════════════════════════════════════════════════════════════════
// JSON schema and resolved configuration
// ════════════════════════════════════════════════════════════════════════

#[test]
fn qr_fit_json_schema() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = sample_csv(dir.path(), 200, 3);
    let doc = stdout_json(&run(&[
        "qr-fit", "--data", &csv, "--response", "y", "--intercept", "--u", "0.5",
    ]));
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "qr-fit");
    assert_eq!(doc["config"]["u"], 0.5);
    assert_eq!(doc["config"]["data"]["response"], "y");
    assert_eq!(doc["config"]["data"]["intercept"], true);
    assert_eq!(doc["result"]["theta"].as_array().unwrap().len(), 2);
    assert_eq!(doc["result"]["converged"], true);
    assert_eq!(doc["result"]["columns"][0], "intercept");
}

#[test]
fn qr_deriv_materializes_defaults_and_attaches_variance() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = sample_csv(dir.path(), 300, 4);
    // No --kernel, --s-draws, --seed, --symmetrize: the resolved config
    // must spell out every default anyway.
    let doc = stdout_json(&run(&[
        "qr-deriv", "--data", &csv, "--response", "y", "--intercept", "--u", "0.5", "--h", "1.0",
        "--variance",
    ]));
    let config = &doc["config"];
    assert_eq!(config["kernel"], "triangular");
    assert_eq!(config["s_draws"], 1000);
    assert_eq!(config["seed"], 0);
    assert_eq!(config["symmetrize"], false);
    assert_eq!(config["h"], 1.0);
    let variance = &doc["result"]["variance"];
    assert_eq!(variance["matrix"].as_array().unwrap().len(), 2);
    assert_eq!(variance["matrix"][0].as_array().unwrap().len(), 2);
    assert!(variance["floored_observations"].is_number());
    // The derivative itself is present and finite.
    let theta_u = doc["result"]["theta_u"].as_array().unwrap();
    assert!(theta_u.iter().all(|v| v.as_f64().unwrap().is_finite()));
}

#[test]
fn dr_deriv_reports_resolved_interval() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = sample_csv(dir.path(), 300, 5);
    let doc = stdout_json(&run(&[
        "dr-deriv", "--data", &csv, "--response", "y", "--intercept", "--u", "1.0", "--h", "0.5",
    ]));
    // The default interval is the observed response range, materialized.
    let interval = &doc["config"]["interval"];
    let lower = interval["lower"].as_f64().unwrap();
    let upper = interval["upper"].as_f64().unwrap();
    assert!(lower < 1.0 && 1.0 < upper);
}

#[test]
fn cdf_defaults_epsilon_and_grid_step() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = sample_csv(dir.path(), 200, 6);
    let doc = stdout_json(&run(&[
        "cdf", "--data", &csv, "--response", "y", "--intercept", "--x", "1,1", "--y", "1.0",
    ]));
    assert_eq!(doc["config"]["epsilon"], 0.01);
    assert_eq!(doc["config"]["grid_step"], 0.005);
    let value = doc["result"]["cdf"].as_f64().unwrap();
    assert!((0.01..=0.99).contains(&value));
}

#[test]
fn single_result_commands_are_replayable() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = sample_csv(dir.path(), 250, 7);
    let args = [
        "qr-deriv", "--data", &csv, "--response", "y", "--intercept", "--u", "0.5", "--h", "0.9",
        "--variance", "--s-draws", "300", "--seed", "11",
    ];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.stdout, second.stdout);
}

// ════════════════════════════════════════════════════════════════════════
// Simulation CSV
// ════════════════════════════════════════════════════════════════════════

#[test]
fn simulate_emits_full_grid_csv() {
    let output = run(&[
        "simulate", "--table", "1", "--reps", "3", "--seed", "9", "--n", "200,400", "--h",
        "0.8,1.2",
    ]);
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "u,n,h,bias_0,bias_1,var_0,var_1,mse_0,mse_1,failures"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4, "2 sample sizes × 2 bandwidths");
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 10);
        assert_eq!(fields[0], "0.5");
        // Everything numeric and finite.
        for field in &fields[2..9] {
            assert!(field.parse::<f64>().unwrap().is_finite(), "row {row}");
        }
        assert_eq!(fields[9], "0");
    }
}

#[test]
fn simulate_is_seed_deterministic() {
    let args = [
        "simulate", "--table", "1", "--reps", "4", "--seed", "21", "--n", "300", "--h", "1.0",
    ];
    assert_eq!(run(&args).stdout, run(&args).stdout);
    let other = run(&[
        "simulate", "--table", "1", "--reps", "4", "--seed", "22", "--n", "300", "--h", "1.0",
    ]);
    assert_ne!(run(&args).stdout, other.stdout);
}

#[test]
fn simulate_thread_count_does_not_change_results() {
    let args = [
        "simulate", "--table", "1", "--reps", "4", "--seed", "33", "--n", "300", "--h", "1.0",
    ];
    let one = bin().args(args).arg("--threads").arg("1").output().unwrap();
    let two = bin().args(args).arg("--threads").arg("2").output().unwrap();
    assert_eq!(one.stdout, two.stdout);
}

// ════════════════════════════════════════════════════════════════════════
// Curve output
// ════════════════════════════════════════════════════════════════════════

#[test]
fn density_quantile_grid_out_writes_curve() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = sample_csv(dir.path(), 400, 8);
    let curve = dir.path().join("curve.csv");
    let curve_str = curve.to_string_lossy().into_owned();
    let doc = stdout_json(&run(&[
        "density-quantile", "--data", &csv, "--response", "y", "--intercept", "--x", "1,1",
        "--u", "0.5", "--h", "1.0", "--grid-out", &curve_str, "--grid-from", "0.3", "--grid-to",
        "0.7", "--curve-points", "5",
    ]));
    assert_eq!(doc["result"]["curve"]["points"], 5);
    let text = std::fs::read_to_string(&curve).expect("curve file exists");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "u,density_quantile");
    assert_eq!(lines.len(), 6, "header + 5 points");
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0].parse::<f64>().unwrap(), 0.3);
    assert!(first[1].parse::<f64>().unwrap() > 0.0);
}
