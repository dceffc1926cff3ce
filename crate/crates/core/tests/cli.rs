use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csgd::experiment::{read_summary, ExperimentConfig};

fn csgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csgd")).args(args).output().unwrap()
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    let o = csgd(&["run", &config("quadratic_ring.cfg"), "--out", path(&out), "--iterations=1000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "summary.csv", "stacked.ckpt", "agent_0.ckpt", "agent_9.ckpt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = read_summary(&out.join("summary.csv")).unwrap();
    assert_eq!(summary["final_k"], "999");
    assert_eq!(summary["config.iterations"], "1000");
    assert!(summary["max_distance_to_minimizer"].parse::<f64>().unwrap().is_finite());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("k,alpha,beta,risk,consensus_error,avg_grad_norm_sq,lyapunov,step_norm_sq\n"));
    assert_eq!(metrics.lines().count(), 1 + 11);
}

#[test]
fn zero_iterations_still_summarise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z");
    let o = csgd(&["run", &config("doublewell_ring.cfg"), "--out", path(&out), "--iterations=0"]);
    assert!(o.status.success());
    let summary = read_summary(&out.join("summary.csv")).unwrap();
    assert_eq!(summary["final_k"], "0");
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 2);
}

#[test]
fn strict_mode_rejects_bad_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let o = csgd(&[
        "run",
        &config("quadratic_ring.cfg"),
        "--out",
        path(dir.path()),
        "--schedule.delta1=0.34",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("3*delta1 < delta2"));
    assert!(!dir.path().join("metrics.csv").exists());

    let o = csgd(&["run", &config("quadratic_ring.cfg"), "--schedule.b=0.3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma_max"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "experiment = synthetic-quadratic\n[schedule]\nb = fast\n").unwrap();
    let o = csgd(&["run", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("schedule.b"), "{err}");

    let o = csgd(&["run", &config("quadratic_ring.cfg"), "--schedul.b=0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schedul.b"));
}

#[test]
fn validate_reports_without_running() {
    let o = csgd(&["validate", &config("mnist_distributed_random.cfg")]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("[boundary]"));
    assert!(text.contains("sigma_max"));
    assert!(text.trim_end().ends_with("verdict: Warn"));
    let o = csgd(&["validate", &config("quadratic_ring.cfg")]);
    assert!(o.status.success());
    assert!(stdout(&o).trim_end().ends_with("verdict: Pass"));
}

#[test]
fn compare_and_ratefit() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, rate: &str| {
        let p = dir.path().join(name);
        fs::write(&p, format!("key,value\nerror_rate,{rate}\nfinal_risk,0.5\n")).unwrap();
        p
    };
    let (a, b, c) = (write("a.csv", "0.1108"), write("b.csv", "0.0712"), write("c.csv", "0.0736"));
    let o = csgd(&["compare", path(&a), path(&b), path(&c)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("11.08") && text.contains("7.12") && text.contains("7.36"), "{text}");
    let delta_rows = text.lines().skip_while(|l| !l.starts_with("first,second")).skip(1).count();
    assert_eq!(delta_rows, 3);
    assert!(text.contains("0.24"));

    let metrics = dir.path().join("m.csv");
    let mut body = String::from("k,consensus_error\n");
    for k in (0..=10_000u64).step_by(100) {
        body.push_str(&format!("{k},{}\n", 3.0 / ((k + 1) as f64).powf(0.75)));
    }
    fs::write(&metrics, body).unwrap();
    let o = csgd(&["ratefit", path(&metrics), "--kmin", "100", "--kmax", "10000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "consensus_error");
    assert!((row[1].parse::<f64>().unwrap() + 0.75).abs() < 1e-9);
}

#[test]
fn runs_are_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = csgd(&["run", &config("doublewell_ring.cfg"), "--out", path(out), "--iterations=3000"]);
        assert!(o.status.success());
    }
    for f in ["metrics.csv", "stacked.ckpt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    // Re-executing the echoed config reproduces the run exactly.
    let mut cfg = ExperimentConfig::from_summary(&a.join("summary.csv")).unwrap();
    let c = dir.path().join("c");
    cfg.out = c.clone();
    csgd::experiment::run_experiment(&cfg).unwrap();
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(c.join("metrics.csv")).unwrap());

    let o = csgd(&["run", &config("doublewell_ring.cfg"), "--out", path(&b), "--iterations=3000", "--seed=2"]);
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("stacked.ckpt")).unwrap(), fs::read(b.join("stacked.ckpt")).unwrap());
}

#[test]
fn seed_sweep_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = csgd(&[
        "run",
        &config("quadratic_ring.cfg"),
        "--out",
        path(dir.path()),
        "--seeds",
        "3,4",
        "--iterations=200",
    ]);
    assert!(o.status.success());
    for s in [3, 4] {
        assert!(dir.path().join(format!("seed_{s}/summary.csv")).exists());
    }
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}
