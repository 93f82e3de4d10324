//! End-to-end tests driving the compiled binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entrocert"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_config(name: &str, body: &str) -> PathBuf {
    let path = tmp(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad json ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

const INDEPENDENT: &str = r#"
schema_version = 1

[model]
type = "gaussian"
precision = [[1.0, 0.0], [0.0, 1.0]]
linear = [0.0, 0.0]

[run]
seed = 7
samples = 500
"#;

const COUPLED_06: &str = r#"
schema_version = 1

[model]
type = "gaussian"
precision = [[1.0, 0.6], [0.6, 1.0]]
linear = [0.0, 0.0]

[run]
seed = 7
samples = 200
"#;

const COUPLED_025: &str = r#"
schema_version = 1

[model]
type = "gaussian"
precision = [[1.0, 0.25], [0.25, 1.0]]
linear = [0.0, 0.0]

[run]
seed = 7
samples = 500
densities = 50
"#;

const GRID: &str = r#"
schema_version = 1

[model]
type = "grid"
grids = [[-1.0, 1.0], [-1.0, 1.0]]
hamiltonian = "0.2*x1*x2"
base = [[1.0, 1.0], [1.0, 1.0]]
rho = [0.5, 0.5]

[run]
seed = 3
samples = 0
exhaustive = true
densities = 25
"#;

#[test]
fn certify_independent_gaussian() {
    let cfg = write_config("independent.toml", INDEPENDENT);
    let out = run(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["seed"], 7);
    assert!((v["results"]["report"]["delta"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["results"]["bound"]["t1_constant"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(v["flags"]["certified"], true);
    assert!(v["runtime_ms"].is_number());
}

#[test]
fn certify_strong_coupling_refused() {
    let cfg = write_config("coupled06.toml", COUPLED_06);
    let out = run(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v = stdout_json(&out);
    assert!((v["results"]["report"]["delta"].as_f64().unwrap() + 0.2).abs() < 1e-12);
    assert_eq!(v["flags"]["certified"], false);
}

#[test]
fn verify_theorem1_holds_and_is_deterministic() {
    let cfg = write_config("coupled025.toml", COUPLED_025);
    let out1 = tmp("verify1.json");
    let out2 = tmp("verify2.json");
    for path in [&out1, &out2] {
        let out = run(&[
            "verify-theorem1",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let strip = |p: &PathBuf| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("runtime_ms");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(strip(&out1), strip(&out2));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out1).unwrap()).unwrap();
    assert_eq!(v["flags"]["all_hold"], true);
    assert_eq!(v["results"]["densities_checked"], 50);
    assert!(v["results"]["min_ratio"].as_f64().unwrap() >= 1.0 - 1e-9);
}

#[test]
fn verify_theorem1_refuses_then_unchecked_still_needs_positive_delta() {
    let cfg = write_config("coupled06b.toml", COUPLED_06);
    let out = run(&["verify-theorem1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "verify-theorem1",
        "--config",
        cfg.to_str().unwrap(),
        "--unchecked",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_theorem1_unchecked_matches_on_certified_model() {
    let cfg = write_config("coupled025b.toml", COUPLED_025);
    let out = run(&[
        "verify-theorem1",
        "--config",
        cfg.to_str().unwrap(),
        "--unchecked",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["flags"]["all_hold"], true);
    assert!((v["results"]["delta"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn verify_theorem1_grid_exhaustive() {
    let cfg = write_config("grid.toml", GRID);
    let out = run(&["verify-theorem1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["flags"]["all_hold"], true);
}

#[test]
fn check_conditions_reports_all_flags() {
    let cfg = write_config("coupled025c.toml", COUPLED_025);
    let out = run(&["check-conditions", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    for key in ["certified", "sq_pass", "ed_pass", "co_pass"] {
        assert_eq!(v["flags"][key], true, "flag {key}");
    }
    assert!((v["results"]["delta"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn misspelled_key_is_rejected() {
    let cfg = write_config(
        "typo.toml",
        &INDEPENDENT.replace("precision", "presicion"),
    );
    let out = run(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("presicion"), "stderr: {err}");
}

#[test]
fn seed_is_mandatory() {
    let cfg = write_config(
        "noseed.toml",
        &INDEPENDENT.replace("seed = 7\n", ""),
    );
    let out = run(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("seed"), "stderr: {err}");
}

#[test]
fn sweep_delta_csv_rows() {
    let body = r#"
schema_version = 1

[model]
type = "gaussian"
precision = [[1.0, 1.0], [1.0, 1.0]]
linear = [0.0, 0.0]

[run]
seed = 1
multipliers = [0.0, 0.25, 0.5]

[output]
format = "csv"
"#;
    let cfg = write_config("sweep.toml", body);
    let out = run(&["sweep-delta", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.trim().lines().collect();
    assert_eq!(
        lines[0],
        "multiplier,delta,t1_constant,rate,lsi_bound,certified"
    );
    assert_eq!(lines.len(), 4);
    let row = |i: usize| -> Vec<&str> { lines[i].split(',').collect() };
    // multiplier 0: independent, delta = 1, constant 2, rate 0
    let r1 = row(1);
    assert_eq!(r1[1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(r1[2].parse::<f64>().unwrap(), 2.0);
    assert_eq!(r1[3].parse::<f64>().unwrap(), 0.0);
    assert_eq!(r1[5], "true");
    // multiplier 0.25: delta = 0.5, constant 8/3, rate 0.377964...
    let r2 = row(2);
    assert!((r2[1].parse::<f64>().unwrap() - 0.5).abs() < 1e-12);
    assert!((r2[2].parse::<f64>().unwrap() - 8.0 / 3.0).abs() < 1e-12);
    assert!((r2[3].parse::<f64>().unwrap() - 0.377_964_473).abs() < 1e-9);
    // multiplier 0.5: delta = 0 boundary, uncertifiable
    let r3 = row(3);
    assert!(r3[1].parse::<f64>().unwrap().abs() < 1e-12);
    assert_eq!(r3[5], "false");
    // delta decreasing down the rows
    assert!(r1[1].parse::<f64>().unwrap() > r2[1].parse::<f64>().unwrap());
    assert!(r2[1].parse::<f64>().unwrap() > r3[1].parse::<f64>().unwrap());
}

#[test]
fn simulate_gibbs_converges() {
    let cfg = write_config("simulate.toml", COUPLED_025);
    let out = run(&[
        "simulate-gibbs",
        "--config",
        cfg.to_str().unwrap(),
        "--sweeps",
        "50",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let entropies: Vec<f64> = v["results"]["entropies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(entropies.len() >= 2);
    for w in entropies.windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
    assert_eq!(v["flags"]["converged"], true);
}

#[test]
fn pathological_refuses_every_dimension() {
    let body = r#"
schema_version = 1

[model]
type = "gaussian"
precision = [[1.0]]
linear = [0.0]

[run]
seed = 2
samples = 200
dims = [2, 5, 10]
target_mean = 1.0
"#;
    let cfg = write_config("pathological.toml", body);
    let out = run(&["pathological", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["flags"]["any_certified"], false);
    let reports = v["results"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for rep in reports {
        assert_eq!(rep["certified"], false);
        assert!((rep["lambda_min"].as_f64().unwrap() - 1.0).abs() < 1e-9);
        assert!(rep["delta"].as_f64().unwrap() <= 0.0);
        let summary = rep["summary"].as_str().unwrap();
        assert!(summary.contains("refused"));
    }
}

#[test]
fn config_round_trip() {
    let cfg = write_config("roundtrip.toml", COUPLED_025);
    // the echoed config re-serializes to an equivalent structure
    let out = run(&["check-conditions", "--config", cfg.to_str().unwrap()]);
    let v = stdout_json(&out);
    let echo = &v["config_echo"];
    assert_eq!(echo["schema_version"], 1);
    assert_eq!(echo["model"]["type"], "gaussian");
    assert_eq!(echo["run"]["seed"], 7);
    assert_eq!(echo["run"]["samples"], 500);
}

#[test]
fn cli_seed_override_changes_report_seed() {
    let cfg = write_config("seedover.toml", COUPLED_025);
    let out = run(&[
        "check-conditions",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["seed"], 99);
}
