use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcmc-se"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Deterministic AR(1)-flavoured two-coordinate chain.
fn write_chain(dir: &Path, name: &str, n: usize, shift: u64) -> PathBuf {
    let mut state = 0x2545_f491_4f6c_dd1d_u64 ^ shift;
    let mut uniform = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let (mut x, mut y) = (0.0, 0.0);
    let mut text = String::new();
    for _ in 0..n {
        x = 0.6 * x + uniform();
        y = 0.3 * y + 0.5 * x + uniform();
        text.push_str(&format!("{x},{y}\n"));
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn estimate_json_is_row_major_with_dim() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_chain(dir.path(), "a.csv", 2000, 1);
    let out = run(&["estimate", "--method", "cc-ise", "--method", "mise", "--input", p.to_str().unwrap()]);
    let v = json(&out);
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    for r in results {
        assert_eq!(r["dim"], serde_json::json!([2, 2]));
        let s: Vec<f64> = r["sigma"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(s.len(), 4);
        assert_eq!(s[1], s[2]);
        assert!(s[0] > 0.0 && s[3] > 0.0);
    }
    assert_eq!(results[0]["method"], "cc-ise");
    assert!(results[0]["ess_per_n"].as_f64().unwrap() > 0.0);
    assert!(results[1]["diagnostics"]["t_n"].is_u64());
}

#[test]
fn estimate_is_deterministic_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_chain(dir.path(), "a.csv", 1500, 2);
    let args = ["estimate", "--method", "bm", "--method", "cc-ise", "--no-timing", "--input", p.to_str().unwrap()];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn parallel_methods_take_many_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_chain(dir.path(), "a.csv", 1000, 3);
    let b = write_chain(dir.path(), "b.csv", 1000, 4);
    let out = run(&[
        "estimate", "--method", "stan-cc", "--method", "gcc-ise", "--method", "gbm",
        "--input", a.to_str().unwrap(), "--input", b.to_str().unwrap(),
    ]);
    let v = json(&out);
    assert_eq!(v["chains"], 2);
    assert_eq!(v["results"].as_array().unwrap().len(), 3);

    let single = run(&["estimate", "--method", "bm", "--input", a.to_str().unwrap(), "--input", b.to_str().unwrap()]);
    assert_eq!(single.status.code(), Some(2));
    let one = run(&["estimate", "--method", "stan-cc", "--input", a.to_str().unwrap()]);
    assert_eq!(one.status.code(), Some(2));
    assert_eq!(run(&["estimate", "--method", "gbm", "--input", a.to_str().unwrap()]).status.code(), Some(2));
    let gcc = run(&["estimate", "--methods", "gcc-ise,cc-ise", "--no-timing", "--input", a.to_str().unwrap()]);
    let v = json(&gcc);
    assert_eq!(v["results"][0]["sigma"], v["results"][1]["sigma"]);
}

#[test]
fn batch_rule_flag() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_chain(dir.path(), "a.csv", 4000, 7);
    let b_n = |extra: &[&str]| {
        let mut args = vec!["estimate", "--method", "bm", "--input", p.to_str().unwrap()];
        args.extend_from_slice(extra);
        json(&run(&args))["results"][0]["diagnostics"]["b_n"].as_u64().unwrap()
    };
    assert_eq!(b_n(&[]), 15);
    assert_eq!(b_n(&["--batch-size", "40"]), 40);
    assert_ne!(b_n(&["--batch-rule", "ar-pilot"]), 15);
}

#[test]
fn csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_chain(dir.path(), "a.csv", 500, 5);
    let out = run(&["estimate", "--method", "sve", "--format", "csv", "--input", p.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,i,j,value");
    assert_eq!(lines.len(), 5);
    assert!(lines[2].starts_with("sve,0,1,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["estimate", "--method", "nope", "--input", "x"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "--input", "x"]).status.code(), Some(2));

    let missing = dir.path().join("missing.csv");
    let out = run(&["estimate", "--method", "bm", "--input", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2\n3\n4,5\n").unwrap();
    assert_eq!(run(&["estimate", "--method", "bm", "--input", ragged.to_str().unwrap()]).status.code(), Some(3));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,abc\n").unwrap();
    let out = run(&["estimate", "--method", "bm", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row"));

    let constant = dir.path().join("constant.csv");
    fs::write(&constant, "1,2\n".repeat(50)).unwrap();
    let out = run(&["estimate", "--method", "mise", "--input", constant.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mise"));
}

#[test]
fn header_flag() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_chain(dir.path(), "a.csv", 300, 6);
    let with_header = dir.path().join("h.csv");
    fs::write(&with_header, format!("x,y\n{}", fs::read_to_string(&p).unwrap())).unwrap();
    let a = run(&["estimate", "--method", "bm", "--no-timing", "--input", p.to_str().unwrap()]);
    let b = run(&["estimate", "--method", "bm", "--no-timing", "--header", "--input", with_header.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn help_lists_methods() {
    let out = run(&["estimate", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for tag in ["cc-ise", "gcc-ise", "stan-cc", "mise", "bm", "sve", "gbm"] {
        assert!(text.contains(tag), "missing {tag}");
    }
}

#[test]
fn benchmark_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "benchmark".to_string(), "--method".into(), "cc-ise".into(), "--method".into(), "bm".into(),
            "--d".into(), "4".into(), "--rho".into(), "1.2".into(), "--n".into(), "500,1000".into(),
            "--reps".into(), "3".into(), "--seed".into(), "42".into(), "--no-timing".into(),
            "--out".into(), out.to_str().unwrap().to_string(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bin().args(args(&a)).status().unwrap().success());
    assert!(bin().args(args(&b)).status().unwrap().success());
    let ca = fs::read(a.join("benchmark.csv")).unwrap();
    assert_eq!(ca, fs::read(b.join("benchmark.csv")).unwrap());
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
    let text = String::from_utf8(ca).unwrap();
    assert_eq!(text.lines().next().unwrap(), "method,n,rep,rel_frobenius,ess_per_n,covered,trunc,wall_clock_s");
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
    let summary: Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"].as_array().unwrap().len(), 4);
}

#[test]
fn slow_mise_needs_opt_in() {
    let out = run(&["benchmark", "--method", "mise", "--n", "500000", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--allow-slow"));
}

#[test]
fn bias_default_grid() {
    let out = run(&["bias", "--d", "2", "--n", "200", "--reps", "2"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 6);
}

#[test]
fn bias_writes_csv() {
    let out = run(&["bias", "--d", "4", "--rho", "1.5,inf", "--n", "2000", "--reps", "4", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,cov_rel_bias,corr_rel_bias,cov_rel_det,corr_rel_det");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("inf,"));
}

#[test]
fn thread_override_is_validated() {
    let out = bin()
        .env("MCMC_SE_THREADS", "zero")
        .args(["bias", "--d", "2", "--rho", "2", "--n", "100", "--reps", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
