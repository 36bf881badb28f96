use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chc_cli::{parse_config, RunConfig};

fn chc(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_chc"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .env("CHC_THREADS", "2")
        .output()
        .unwrap()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn dualcheck_on_defaults_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = chc(&["dualcheck", "--out", out.to_str().unwrap()], "", dir.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("dualcheck.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("delta_or_trial,lhs,rhs,rel_error"));
    let gaps: Vec<f64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 20);
    assert!(gaps.iter().all(|&g| g <= 1e-10));
}

#[test]
fn simulate_without_noise_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "time.n_steps = 20\ntime.T = 0.02\noutput.stride = 5\n";
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = chc(&["simulate", "--out", out.to_str().unwrap()], cfg, dir.path());
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let (fa, fb) = (read_dir_bytes(&a), read_dir_bytes(&b));
    assert_eq!(fa.len(), 2 + 1 + 5);
    assert!(fa.iter().any(|(n, _)| n.ends_with("path0_step000020.chf")));
    // effective configs differ only in output.dir
    let strip = |v: Vec<(String, Vec<u8>)>| -> Vec<_> {
        v.into_iter().filter(|(n, _)| n != "effective_config.txt").collect()
    };
    assert_eq!(strip(fa), strip(fb));
}

#[test]
fn optimize_with_zero_iterations_reports_initial_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = "optimizer.max_iters = 0\ntime.n_steps = 10\ntime.T = 0.02\n";
    let res = chc(&["optimize", "--out", out.to_str().unwrap()], cfg, dir.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "iter,J,vi_residual,step,norm_u");
    assert!(lines[1].starts_with("0,"));
    assert!(out.join("control_final.chu").exists());
}

#[test]
fn gradcheck_writes_table_and_respects_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = "time.n_steps = 20\ntime.T = 0.04\n";
    let res = chc(&["gradcheck", "--out", out.to_str().unwrap()], cfg, dir.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_to_string(out.join("gradcheck.csv")).unwrap().lines().count(), 4);

    let strict = format!("{cfg}check.grad_tol = 1e-30\n");
    let res = chc(&["gradcheck", "--out", out.to_str().unwrap()], &strict, dir.path());
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.starts_with("ERROR ToleranceExceeded: "), "{err}");
}

#[test]
fn config_errors_are_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "potential.kind = logarithmic\npotential.theta = 1.5\npotential.use_regularized = true\n\
               cost.alpha2 = 0\ncost.alpha3 = 0\nbogus.key = 1\n";
    let res = chc(&["simulate"], cfg, dir.path());
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 3, "{err}");
    assert!(lines.iter().all(|l| l.starts_with("ERROR ConfigError: ")));
    assert!(err.contains("psi_log requires 0<theta<theta0"));
    assert!(err.contains("requires alpha1+alpha2+alpha3>0"));
    assert!(err.contains("bogus.key"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = "noise.kind = additive\ntime.n_steps = 5\ntime.T = 0.01\n";
    let res = chc(&["simulate", "--out", out.to_str().unwrap(), "--seed", "42"], cfg, dir.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let echo = fs::read_to_string(out.join("effective_config.txt")).unwrap();
    let c: RunConfig = parse_config(&echo).unwrap();
    assert_eq!(c.seed, 42);
    assert!(fs::read_to_string(out.join("noise_manifest.txt")).unwrap().contains("42"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let res = Command::new(env!("CARGO_BIN_EXE_chc"))
        .args(["simulate", "--config", "/nonexistent/run.cfg"])
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("ERROR Io: "));
}
