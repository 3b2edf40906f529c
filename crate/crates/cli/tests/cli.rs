use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fracdens");

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--out").arg(out).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV written by the CLI, without comment lines and header.
fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn invalid_hurst_names_the_field() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["density", "--set", "hurst=1.2", "--set", "ys=0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hurst"), "{}", stderr(&o));
}

#[test]
fn missing_points_are_reported() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["density"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ys"), "{}", stderr(&o));
}

#[test]
fn unknown_drift_lists_the_known_ones() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["density", "--set", "drift=cubic", "--set", "ys=0"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("drift") && e.contains("tanh_well"), "{e}");
}

#[test]
fn unknown_experiment_exits_2_with_the_catalog() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["validate", "no_such_thing"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("no_such_thing") && e.contains("conditional_fou") && e.contains("averaging"), "{e}");
}

#[test]
fn failed_verdict_exits_1() {
    // an impossible tolerance forces the verdict
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["validate", "frac_inversion", "--set", "tol=1e-12"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("frac_inversion.json")).unwrap()).unwrap();
    assert_eq!(rep["verdict"], "fail");
    assert_eq!(rep["inputs"]["config.tol"], "1e-12");
}

#[test]
fn passing_verdict_writes_report_and_tables() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["validate", "zero_drift"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("zero_drift: pass"));
    assert!(d.path().join("zero_drift.json").exists());
    assert!(d.path().join("config.txt").exists());
}

#[test]
fn zero_drift_density_has_zero_stderr_and_one_row_per_point() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["density", "--set", "drift=zero", "--set", "ys=-1;0;0.5;2", "--set", "n_paths=50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&d.path().join("density.csv"));
    assert_eq!(r.len(), 4);
    for row in &r {
        // columns: hurst, drift, lambda, y1, t, value, stderr, ...
        assert_eq!(row[6].parse::<f64>().unwrap(), 0.0);
        assert!(row[5].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn same_seed_same_bytes_and_config_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    let args = ["--seed", "5", "density", "--set", "ys=0;1", "--set", "n_paths=200", "--set", "drift=tanh_well"];
    assert!(run(&a, &args).status.success());
    assert!(run(&b, &args).status.success());
    let fa = std::fs::read(a.join("density.csv")).unwrap();
    assert_eq!(fa, std::fs::read(b.join("density.csv")).unwrap());
    // the echo reproduces the run on its own
    let cfg = a.join("config.txt");
    let o = Command::new(BIN).arg("--out").arg(&c).arg("--config").arg(&cfg).arg("density").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fa, std::fs::read(c.join("density.csv")).unwrap());
}

#[test]
fn different_seeds_differ() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let args = |s: &'static str| ["--seed", s, "simulate", "--set", "n_steps=20"];
    assert!(run(&a, &args("1")).status.success());
    assert!(run(&b, &args("2")).status.success());
    assert_ne!(std::fs::read(a.join("paths.csv")).unwrap(), std::fs::read(b.join("paths.csv")).unwrap());
}

#[test]
fn simulate_layouts() {
    let d = tempfile::tempdir().unwrap();
    let one = d.path().join("one");
    assert!(run(&one, &["simulate", "--set", "n_steps=25"]).status.success());
    let text = std::fs::read_to_string(one.join("paths.csv")).unwrap();
    assert!(text.starts_with("# schema: fracdens.paths/1\n"));
    assert!(text.lines().any(|l| l == "t,y1"));
    assert_eq!(rows(&one.join("paths.csv")).len(), 26);

    let many = d.path().join("many");
    assert!(run(&many, &["simulate", "--set", "n_steps=10", "--set", "paths=3", "--set", "dim=2"]).status.success());
    let text = std::fs::read_to_string(many.join("paths.csv")).unwrap();
    assert!(text.lines().any(|l| l == "path,t,y1,y2"));
    assert_eq!(rows(&many.join("paths.csv")).len(), 33);
}

#[test]
fn config_file_and_overrides() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "# fOU\ndrift = linear\nhurst = 0.3\nys = 0\nn_paths = 100\n").unwrap();
    let out = d.path().join("o");
    let o = Command::new(BIN)
        .arg("--out")
        .arg(&out)
        .arg("--config")
        .arg(&cfg)
        .args(["density", "--set", "hurst=0.6"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("hurst = 0.6"));
    assert!(echo.contains("n_paths = 100"));
    assert_eq!(rows(&out.join("density.csv"))[0][0], "0.6");
}
