use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_robust-bed"));
    c.env_remove("ROBUST_BED_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Parses `name=value` pairs from a single output line.
fn field(out: &Output, name: &str) -> String {
    let text = stdout(out);
    assert_eq!(text.lines().count(), 1, "{text}");
    text.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{name}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {name} in {text}"))
}

#[test]
fn mi_matches_the_uniform_prior_closed_form() {
    let out = run(&["mi", "--model", "abtest", "--alpha", "1.0", "--na", "1", "--nx", "1", "--priors", "1,1,1,1"]);
    assert!(out.status.success());
    let v: f64 = field(&out, "sibson_mi").parse().unwrap();
    // one Bernoulli trial under a uniform prior: log 2 - 1/2
    assert!((v - (2f64.ln() - 0.5)).abs() < 1e-12, "{v}");
    assert!((v - 0.19315).abs() < 1e-5);
}

#[test]
fn mi_linreg_single_design() {
    let out = run(&["mi", "--alpha", "1", "--design", "1"]);
    let v: f64 = field(&out, "sibson_mi").parse().unwrap();
    assert!((v - 0.5 * 3f64.ln()).abs() < 1e-12);
    let out = run(&["mi", "--model", "abtest", "--alpha", "0.5", "--na", "10", "--nx", "25"]);
    assert!(out.status.success());
}

#[test]
fn domain_errors_exit_one_with_a_single_line() {
    let out = run(&["mi", "--model", "abtest", "--alpha", "1.5", "--na", "1", "--nx", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("(0, 1]"), "{err}");
    let out = run(&["mi", "--model", "abtest", "--alpha", "0.5", "--na", "30", "--nx", "25"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two_and_help_exits_zero() {
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["mi", "--alpha", "0.5", "--bogus-flag", "1"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    for sub in ["mi", "estimate", "calibrate", "infogain", "coverage", "elpd", "regret"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(stdout(&out).contains("Usage"));
    }
}

#[test]
fn estimate_is_deterministic_and_echoes_budgets() {
    let args = ["estimate", "--alpha", "0.5", "--design", "1", "--outer-n", "400", "--inner-m", "50", "--seed", "3"];
    let (a, b) = (run(&args), run(&args));
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(field(&a, "outer_n"), "400");
    assert_eq!(field(&a, "inner_m"), "50");
    assert_eq!(field(&a, "seed"), "3");
    let v: f64 = field(&a, "estimate").parse().unwrap();
    assert!((v - 0.5 * 2f64.ln()).abs() < 0.1, "{v}");
}

#[test]
fn seed_comes_from_the_environment_when_unset() {
    let args = ["estimate", "--alpha", "0.5", "--design", "1", "--outer-n", "50", "--inner-m", "10"];
    let from_env = bin().args(args).env("ROBUST_BED_SEED", "9").output().unwrap();
    assert_eq!(field(&from_env, "seed"), "9");
    let explicit = run(&[&args[..], &["--seed", "9"]].concat());
    assert_eq!(stdout(&from_env), stdout(&explicit));
    assert_eq!(field(&run(&args), "seed"), "0");
    let bad = bin().args(args).env("ROBUST_BED_SEED", "x").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn calibrate_prints_multiplier_and_order() {
    let out = run(&["calibrate", "--rho", "0.1", "--design", "1"]);
    assert!(out.status.success());
    let beta: f64 = field(&out, "beta").parse().unwrap();
    let alpha: f64 = field(&out, "alpha").parse().unwrap();
    assert!((alpha - beta / (1.0 + beta)).abs() < 1e-12);
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"model": "abtest", "trials": 4, "seed": 1, "output": {:?}}}"#,
            out_a.to_str().unwrap()
        ),
    )
    .unwrap();
    let a = run(&["regret", "--config", cfg.to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(field(&a, "output"), out_a.to_str().unwrap());
    let b = run(&["regret", "--config", cfg.to_str().unwrap(), "--seed", "7", "--output", out_b.to_str().unwrap()]);
    assert!(b.status.success());
    assert_ne!(read(&out_a), read(&out_b));
    let meta: serde_json::Value =
        serde_json::from_slice(&read(&dir.path().join("b.csv.meta.json"))).unwrap();
    assert_eq!(meta["config"]["seed"], 7);
    assert_eq!(meta["config"]["trials"], 4);

    std::fs::write(&cfg, r#"{"trails": 4}"#).unwrap();
    assert_eq!(run(&["regret", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}
