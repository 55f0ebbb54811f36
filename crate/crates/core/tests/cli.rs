use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use frailty::io::write_precip_csv;
use frailty::simstudy::{synth_covariates, CovariateSpec};
use frailty::{simulate, ModelParams, SimulationConfig};

fn frailty(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frailty"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn frailty")
}

/// Synthetic 3-station data set plus a config pointing at it.
fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let n = 600;
    let params = ModelParams::new(
        vec![vec![0.5, 0.0, 0.1], vec![0.3, 0.2, 0.0], vec![0.1, 0.1, 0.3]],
        vec![0.0, 0.1],
        0.7,
    )
    .unwrap();
    let cov = synth_covariates(&[CovariateSpec::default()], n, 1).unwrap();
    let panel = simulate(&params, &cov, &SimulationConfig::new(3, n, 2)).unwrap();
    write_precip_csv(&dir.path().join("precip.csv"), &panel, None).unwrap();
    frailty::io::write_covariate_csv(&dir.path().join("cov.csv"), &cov, None).unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "seed = 3\noutput_dir = \"out\"\n\n[data]\nprecip = \"precip.csv\"\ncovariates = \"cov.csv\"\n\n[fit]\nprofile_params = [0]\n{extra}"
        ),
    )
    .unwrap();
    (dir, config)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn fit_writes_converged_result() {
    let (dir, config) = setup("");
    let out = frailty(&["fit", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("out/fit.json"))).unwrap();
    assert_eq!(json["fit"]["converged"], true);
    assert_eq!(json["meta"]["seed"], 3);
    assert_eq!(json["meta"]["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(json["intervals"].as_array().unwrap().len(), 1);
    let run: serde_json::Value = serde_json::from_str(&read(&dir.path().join("out/run.json"))).unwrap();
    assert_eq!(run["exit_code"], 0);
    assert!(run["started_at"].is_string());
}

#[test]
fn tiny_budget_exits_3_with_best_point() {
    let (dir, config) = setup("");
    let out = frailty(&["fit", "--config", config.to_str().unwrap(), "--set", "fit.max_evals=1"]);
    assert_eq!(out.status.code(), Some(3));
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("out/fit.json"))).unwrap();
    assert_eq!(json["fit"]["converged"], false);
    assert!(json["fit"]["estimates"]["contagion"].is_array());
}

#[test]
fn missing_covariate_column_exits_2() {
    let (_dir, config) = setup("");
    let out = frailty(&[
        "fit",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "data.schema.covariates=[\"humidity\"]",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("humidity"));
}

#[test]
fn config_problems_exit_4() {
    let out = frailty(&["fit", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(4));
    let (_dir, config) = setup("");
    let out = frailty(&["fit", "--config", config.to_str().unwrap(), "--set", "fti.level=0.9", "--json-errors"]);
    assert_eq!(out.status.code(), Some(4));
    let err: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"], "config");
    assert_eq!(err["exit_code"], 4);
}

#[test]
fn simulate_twice_gives_identical_csv() {
    let params = "params={ contagion = [[0.5, 0.1], [0.2, 0.3]], volatility_coefs = [0.0, 0.2], threshold = 0.7 }";
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.toml");
    std::fs::write(
        &config,
        "seed = 99\n[simulate]\nn_steps = 300\ncovariates = [{ mean = 0.0, stdev = 1.0, autocorrelation = 0.5 }]\n",
    )
    .unwrap();
    let run = || {
        let out = frailty(&["simulate", "--config", config.to_str().unwrap(), "--set", params]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        read(&dir.path().join("out/simulated.csv"))
    };
    let first = run();
    assert_eq!(first, run());
    assert!(first.starts_with("# config_sha256="));
    assert!(first.contains("seed=99"));
    assert_eq!(first.lines().count(), 302);
}

#[test]
fn diagnose_on_validation_split() {
    let (dir, config) = setup("\n[diagnose]\nn_replicas = 30\nauto_lags = [0, 1, 2]\ncross_lags = [-1, 0, 1]\n");
    let cfg = config.to_str().unwrap();
    assert_eq!(frailty(&["fit", "--config", cfg]).status.code(), Some(0));
    let out = frailty(&[
        "diagnose",
        "--config",
        cfg,
        "--set",
        "params_file=\"out/fit.json\"",
        "--set",
        "data.schema.train_end=400",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("out/diagnostics.json"))).unwrap();
    assert_eq!(json["n_replicas"], 30);
    assert_eq!(json["transitions"].as_array().unwrap().len(), 3);
    // 3 autocorrelation series plus 3 station pairs
    assert_eq!(json["correlations"].as_array().unwrap().len(), 6);
    for name in ["dry_spells", "transitions", "correlations", "qq", "contingency"] {
        assert!(dir.path().join(format!("out/diagnostics/{name}.csv")).exists(), "{name}");
    }
}
