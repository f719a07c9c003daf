use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use specsense::cli::{self, output::round_sig};
use specsense::optimizer;

fn specsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specsense"))
        .args(args)
        .env("SPECSENSE_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("experiment.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_json_round_trips_to_twelve_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve.json");
    let res = specsense(&["--command", "solve", "--format", "json", "--output", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let rows: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let row = &rows.as_array().unwrap()[0];
    let keys: Vec<&str> = row.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, cli::run::SOLUTION_COLUMNS);

    let cfg = cli::parse_config("").unwrap();
    let sol = optimizer::solve(&cfg.spec);
    let opt = sol.optimum.unwrap();
    assert_eq!(row["n_star"].as_u64(), Some(opt.n as u64));
    assert_eq!(row["tau_star_s"].as_f64(), Some(round_sig(opt.tau)));
    assert_eq!(row["phi_star"].as_f64(), Some(round_sig(opt.phi)));
    assert_eq!(row["gamma_star"].as_f64(), Some(round_sig(opt.gamma)));
    assert_eq!(row["p_I"].as_f64(), Some(round_sig(cfg.spec.ch.p_idle())));
    assert_eq!(row["feasible"], Value::Bool(true));

    let per_n: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("solve.per_n.json")).unwrap()).unwrap();
    assert_eq!(per_n.as_array().unwrap().len(), sol.per_n.len());
}

#[test]
fn sweep_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "sweep.variable = \"energy_ratio\"\nsweep.values = [0.5, 2.0]\n");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = specsense(&["--config", &config, "--command", "sweep", "--output", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("energy_ratio,n_star,tau_star_s,phi_star,gamma_star,feasible"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn validate_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "monte_carlo.trials = 50\nmonte_carlo.horizon = 200\n");
    let run = |seed: &str| {
        let res = specsense(&["--config", &config, "--command", "validate", "--seed", seed]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        res.stdout
    };
    let first = run("7");
    assert_eq!(first, run("7"));
    assert_ne!(first, run("8"));
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("quantity,analytic,empirical,std_error,pass\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn infeasible_target_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "target.p_bar = [[0.5, 0.0], [0.0, 0.5]]\n");
    let res = specsense(&["--config", &config]);
    assert_eq!(res.status.code(), Some(1));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",,,,,false"));
}

#[test]
fn invalid_config_exits_two_with_invariant_name() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "channel.alpha = -1.0\n");
    let res = specsense(&["--config", &config]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("channel.alpha_positive"));

    let res = specsense(&["--output", "/nonexistent-dir/out.csv"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("/nonexistent-dir/out.csv"));
}
