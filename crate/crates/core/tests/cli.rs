use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mfg-invest"));
    c.env_remove("MFG_INVEST_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn defaults_are_echoed() {
    let out = run(&["solve-mfg"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["params"]["delta"], 1.0);
    assert_eq!(v["params"]["a1"], 0.1);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert!(v["rho_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_alpha_exits_with_config_code() {
    let out = run(&["solve-single", "--alpha", "1.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha ∈ (0,1)"));
}

#[test]
fn flag_overrides_file_and_env_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "lambda = 0.3\nr = 4.0\n").unwrap();
    let p = path.to_str().unwrap();

    let v = json(&run(&["solve-single", "--config", p, "--lambda", "0.6"]));
    assert_eq!(v["params"]["lambda"], 0.6);
    assert_eq!(v["params"]["r"], 4.0);

    let out = bin()
        .env("MFG_INVEST_CONFIG", p)
        .arg("solve-single")
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["params"]["lambda"], 0.3);
}

#[test]
fn unknown_file_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "lambda = 0.3\nkappa = 1\n").unwrap();
    let out = run(&["solve-mfg", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa"));
}

#[test]
fn check_exit_codes() {
    let ok = run(&["check"]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let v = json(&ok);
    assert_eq!(v["passed"], true);
    assert!(!v["warnings"].as_array().unwrap().is_empty());

    let degenerate = run(&["check", "--no-sim", "--alpha", "0.5"]);
    assert_eq!(degenerate.status.code(), Some(1));
    assert_eq!(json(&degenerate)["first_failure"], "non-degeneracy");

    let loose = run(&["check", "--no-sim", "--a1", "2"]);
    assert_eq!(loose.status.code(), Some(1));
    assert_eq!(json(&loose)["first_failure"], "contraction");
}

#[test]
fn sweep_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let res = run(&["sweep", "--param", "alpha", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let (header, rows) = read_csv(&out);
    assert_eq!(
        header,
        [
            "value",
            "y0",
            "xb_single",
            "xs_single",
            "rho_star",
            "xb_mfg",
            "xs_mfg",
            "K"
        ]
    );
    // α = 0.5 collides with 2δ/γ² and is skipped
    assert_eq!(rows.len(), 8);
    let summary = json(&res);
    assert_eq!(summary["skipped"].as_array().unwrap().len(), 1);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# mfg-invest "));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "simulate".to_string(),
            "--paths".into(),
            "50".into(),
            "--dt".into(),
            "0.005".into(),
            "--horizon".into(),
            "2".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            p.to_str().unwrap().into(),
        ]
    };
    assert!(bin().args(args(&a)).output().unwrap().status.success());
    assert!(bin()
        .args(args(&b))
        .arg("--sequential")
        .output()
        .unwrap()
        .status
        .success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (header, rows) = read_csv(&a);
    assert_eq!(header[0], "index");
    assert_eq!(rows.len(), 50);
}

#[test]
fn simulate_explicit_band() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("p.csv");
    let out = run(&[
        "simulate",
        "--xb",
        "0.1",
        "--xs",
        "0.4",
        "--paths",
        "5",
        "--horizon",
        "1",
        "--dt",
        "0.01",
        "--out",
        f.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (h, rows) = read_csv(&f);
    let t = h.iter().position(|c| c == "terminal").unwrap();
    for r in rows {
        let x: f64 = r[t].parse().unwrap();
        assert!((0.1..=0.4).contains(&x));
    }
    assert_eq!(
        run(&["simulate", "--xb", "0.5", "--xs", "0.4"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn nash_gap_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("gap.csv");
    let out = run(&[
        "nash-gap",
        "--N",
        "10,100",
        "--samples",
        "500",
        "--paths",
        "100",
        "--dt",
        "0.01",
        "--seed",
        "3",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["report"]["rows"].as_array().unwrap().len(), 2);
    let (h, rows) = read_csv(&csv);
    assert_eq!(h, ["N", "deviation_stat", "gap", "stderr"]);
    assert_eq!(rows.len(), 2);
}

#[test]
fn solve_single_grid_and_law_csv() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("v.csv");
    let out = run(&[
        "solve-single",
        "--rho",
        "2",
        "--grid",
        "0.01:10:50",
        "--out",
        g.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(read_csv(&g).1.len(), 50);
    let l = dir.path().join("law.csv");
    assert!(run(&["solve-mfg", "--law-csv", l.to_str().unwrap()])
        .status
        .success());
    let (h, rows) = read_csv(&l);
    assert_eq!(h, ["x", "density", "cdf"]);
    assert_eq!(rows.last().unwrap()[2], "1");
}
