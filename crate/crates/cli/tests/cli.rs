use std::fs;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neural-rbmle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(out: &[u8]) -> String {
    String::from_utf8_lossy(out).into_owned()
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = bin(&[
        "run",
        "--algo",
        "random",
        "--env",
        "synthetic:linear",
        "--T",
        "100",
        "--trials",
        "2",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "summary.csv",
            "trace_random_trial0.csv",
            "trace_random_trial1.csv"
        ]
    );
    let trace = fs::read_to_string(out.join("trace_random_trial0.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "t,arm,reward,optimal_mean,instant_regret,cumulative_regret"
    );
    assert_eq!(trace.lines().count(), 101);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "# small run\nalgo = lin-rbmle\nenv = synthetic:quadratic\nT = 30\ntrials = 3\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = bin(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert!(out.join("trace_lin-rbmle_trial0.csv").exists());
    assert!(!out.join("trace_lin-rbmle_trial1.csv").exists());
}

#[test]
fn unknown_algo_is_a_usage_error() {
    let o = bin(&["run", "--algo", "thompson"]);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    for name in ["rbmle-ga", "rbmle-pc", "neural-ucb", "lin-rbmle", "random"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn bad_config_value_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "T = 10\nm = seven\n").unwrap();
    let o = bin(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("row 2"), "{}", text(&o.stderr));
}

#[test]
fn help_lists_every_key() {
    let o = bin(&["run", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = text(&o.stdout);
    for (key, _) in neural_rbmle::harness::KEYS {
        assert!(help.contains(&format!("  {key} ")), "missing {key}");
    }
    assert!(help.contains("RBMLE_THREADS"));
}

#[test]
fn bad_thread_count_is_reported() {
    let o = Command::new(env!("CARGO_BIN_EXE_neural-rbmle"))
        .args(["run", "--algo", "random", "--T", "5", "--trials", "1"])
        .env("RBMLE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("RBMLE_THREADS"));
}

#[test]
fn ntk_prints_effective_dimension() {
    // Orthonormal contexts at depth 2: H = 1.5 on the diagonal and 1/π off it,
    // so the eigenvalues are 1.5 − 1/π (twice) and 1.5 + 2/π.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ctx.csv");
    fs::write(&path, "1,0,0\n0,1,0\n0,0,1\n").unwrap();
    let o = bin(&[
        "ntk",
        "--contexts",
        path.to_str().unwrap(),
        "--depth",
        "2",
        "--lambda",
        "0.001",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let got: f64 = text(&o.stdout).trim().parse().unwrap();
    let (lambda, pi) = (1e-3f64, std::f64::consts::PI);
    let log_det =
        2.0 * (1.0 + (1.5 - 1.0 / pi) / lambda).ln() + (1.0 + (1.5 + 2.0 / pi) / lambda).ln();
    let want = log_det / (1.0 + 3.0 / lambda).ln();
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn ntk_rejects_non_unit_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ctx.csv");
    fs::write(&path, "1,1\n").unwrap();
    let o = bin(&["ntk", "--contexts", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = bin(&["ntk", "--contexts", path.to_str().unwrap(), "--preprocess"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn gradcheck_passes_on_defaults() {
    let o = bin(&["gradcheck", "--samples", "5", "--L", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let err: f64 = text(&o.stdout).trim().parse().unwrap();
    assert!(err <= 1e-5);
}
