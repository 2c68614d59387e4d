use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn segpart(cmd: &str, config: &Path, envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_segpart"));
    c.arg(cmd).arg("--config").arg(config);
    c.env_remove("SEGPART_THREADS");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_pairs(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

const RECT: &str = r#"{"schema": 1, "domain": {"shape": "rectangle", "params": [2, 1]}, "grid": {"n": 32},
  "problem": {"k": 2, "r": 0.0, "r_values": [0.125, 0.0625, 0.03125, 0]}, "output": {"dir": "OUT"}}"#;

#[test]
fn eig_prints_lambda_and_creates_nested_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sq.json",
        r#"{"schema": 1, "domain": {"shape": "square", "params": [1]}, "grid": {"n": 32},
            "output": {"dir": "a/b/c"}}"#,
    );
    let o = segpart("eig", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("lambda1=19.7"), "{}", stdout(&o));
    let out = tmp.path().join("a/b/c");
    let sidecar = read_json(&out.join("eig.json"));
    assert!((sidecar["lambda"].as_f64().unwrap() - 19.7).abs() < 0.1);
    let spf = fs::read(out.join("eig.spf1")).unwrap();
    assert!(spf.starts_with(b"SPF1 33 33 0.03125\n"));
    assert_eq!(spf.len(), "SPF1 33 33 0.03125\n".len() + 8 * 33 * 33);
    assert!(out.join("run.log").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = write_config(
        tmp.path(),
        "empty.json",
        r#"{"schema": 1, "domain": {"shape": "square", "params": [0]}, "grid": {"n": 8}, "output": {"dir": "o"}}"#,
    );
    let o = segpart("eig", &empty, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty domain"), "{}", stderr(&o));

    let unknown = write_config(
        tmp.path(),
        "unknown.json",
        r#"{"schema": 1, "domain": {"shape": "square", "params": [1]}, "grid": {"n": 8}, "colour": 3, "output": {"dir": "o"}}"#,
    );
    assert_eq!(segpart("eig", &unknown, &[]).status.code(), Some(2));
    assert_eq!(segpart("eig", &tmp.path().join("missing.json"), &[]).status.code(), Some(2));

    let rect = write_config(tmp.path(), "rect.json", RECT);
    assert_eq!(segpart("eig", &rect, &[("SEGPART_THREADS", "many")]).status.code(), Some(2));
    let no_sweep =
        write_config(tmp.path(), "nosweep.json", &RECT.replace(r#", "r_values": [0.125, 0.0625, 0.03125, 0]"#, ""));
    assert_eq!(segpart("sweep", &no_sweep, &[]).status.code(), Some(2));
}

#[test]
fn partition_manifest_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rect.json", RECT);
    let o = segpart("partition", &cfg, &[("SEGPART_THREADS", "2")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("OUT");
    let first = fs::read(out.join("manifest.json")).unwrap();
    let manifest: Value = serde_json::from_slice(&first).unwrap();
    assert!(manifest["c"].as_f64().unwrap() <= 39.9);
    assert_eq!(manifest["k"], 2);
    assert_eq!(manifest["pass_style"], "gauss-seidel");
    let field = fs::read(out.join("u_1.spf1")).unwrap();
    let pgm = fs::read_to_string(out.join("support_2.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n65 33\n255\n"));

    let o = segpart("partition", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(out.join("manifest.json")).unwrap(), first);
    assert_eq!(fs::read(out.join("u_1.spf1")).unwrap(), field);
}

#[test]
fn infeasible_separation_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rect.json", &RECT.replace(r#""r": 0.0"#, r#""r": 1.9"#));
    let o = segpart("partition", &cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("infeasible r"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_monotone_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rect.json", RECT);
    let o = segpart("sweep", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("OUT");
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,c_r,lambda_1,lambda_2,lip_max,linf_max,holder_05,dist_to_u0"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0] && w[0][1] <= w[1][1]));
    let summary = read_json(&out.join("sweep.json"));
    let slope = summary["slope"].as_f64().unwrap();
    assert!(slope.is_finite() && slope > 0.0);
}

#[test]
fn verify_reference_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "v.json",
        r#"{"schema": 1, "domain": {"shape": "disk", "params": [1]}, "grid": {"n": 64},
            "checks": ["cap", "psi", "gamma", "radial", "gradient_location", "poincare"],
            "verify": {"dim": 3, "poincare_fields": 20}, "output": {"dir": "v"}}"#,
    );
    let o = segpart("verify", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = tmp.path().join("v");
    let cap = csv_pairs(&out.join("verify_cap.csv"));
    assert_eq!(cap[0].0, 0.0);
    assert!((cap[0].1 - 2.0).abs() <= 1e-6);
    let psi = csv_pairs(&out.join("verify_psi.csv"));
    assert!(psi[0].0 == 0.0 && (psi[0].1 - 1.0).abs() <= 1e-9);
    let gamma = csv_pairs(&out.join("verify_gamma.csv"));
    assert!(gamma.iter().any(|&(t, g)| t == 2.0 && (g - 1.0).abs() <= 1e-9));
    let summary = read_json(&out.join("verify.json"));
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn verify_failure_and_error_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let base = r#"{"schema": 1, "domain": {"shape": "square", "params": [1]}, "grid": {"n": 32},
        "checks": CHECKS, "output": {"dir": "v"}}"#;
    let unknown = write_config(tmp.path(), "u.json", &base.replace("CHECKS", r#"["cap", "sharpness"]"#));
    assert_eq!(segpart("verify", &unknown, &[]).status.code(), Some(2));
    // The ground state of a square does not vanish on the exterior ball at the origin.
    let broken = write_config(tmp.path(), "b.json", &base.replace("CHECKS", r#"["acf"]"#));
    let o = segpart("verify", &broken, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL acf"));
    // At this resolution the discrete mean value sits just outside the 1% slack.
    let coarse = write_config(
        tmp.path(),
        "f.json",
        &base.replace("CHECKS", r#"["mean_value"]"#).replace("square", "disk").replace("32", "64"),
    );
    let o = segpart("verify", &coarse, &[]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL mean_value"));
}
