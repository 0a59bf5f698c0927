use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liouville"))
        .args(args)
        .env_remove("LIOUVILLE_JOBS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_documents_exit_codes() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for c in ["0 ", "1 ", "2 ", "3 ", "4 ", "5 ", "64"] {
        assert!(text.contains(&format!("  {c}")), "missing exit code {c}");
    }
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&run(&["frobnicate"])), 64);
    assert_eq!(code(&run(&["branch", "--n", "3"])), 64);
    assert_eq!(code(&run(&["mu2-table", "--format", "xml"])), 64);
}

#[test]
fn table_writes_rows_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = run(&["mu2-table", "--n-min", "2", "--n-max", "3", "--out", path(&a)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["--jobs", "1", "mu2-table", "--n-min", "2", "--n-max", "3", "--out", path(&b)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 3 + 4);
    assert!(lines[1..4].iter().all(|l| l.ends_with(",0*")));
    assert!(lines[4..].iter().all(|l| l.ends_with(",+") || l.ends_with(",-")));
}

#[test]
fn table_json_parses() {
    let out = run(&["mu2-table", "--n-min", "4", "--n-max", "4", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 5);
}

#[test]
fn table_range_is_checked() {
    assert_eq!(code(&run(&["mu2-table", "--n-min", "0", "--n-max", "3"])), 4);
    assert_eq!(code(&run(&["mu2-table", "--n-min", "3", "--n-max", "61"])), 4);
}

#[test]
fn config_errors_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[quadrature]\npanels = 3\n").unwrap();
    assert_eq!(code(&run(&["--config", path(&cfg), "kernel", "--n", "3"])), 5);
    let missing = dir.path().join("none.toml");
    assert_eq!(code(&run(&["--config", path(&missing), "kernel", "--n", "3"])), 5);
}

#[test]
fn config_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[quadrature]\npoints_per_panel = 1\n").unwrap();
    // a one-point rule cannot converge under refinement
    assert_eq!(code(&run(&["--config", path(&cfg), "mu2-table", "--n-min", "3", "--n-max", "3"])), 2);
    // a flag overrides the file
    let out = run(&[
        "--config",
        path(&cfg),
        "mu2-table",
        "--n-min",
        "3",
        "--n-max",
        "3",
        "--points",
        "16",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(&cfg, "[quadrature]\npanel_count = 0\n").unwrap();
    assert_eq!(code(&run(&["--config", path(&cfg), "mu2-table", "--n-min", "3", "--n-max", "3"])), 4);
}

#[test]
fn kernel_reports_dimensions() {
    let out = run(&["kernel", "--n", "4", "--m", "2", "--json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["dimension"], 12);
    assert_eq!(v["restricted"]["dimension"], 1);
}

#[test]
fn branch_refuses_multidimensional_kernel() {
    let out = run(&["branch", "--n", "3", "--m", "1"]);
    assert_eq!(code(&out), 4);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dimension 2"), "{err}");
    assert!(err.contains("P_3^3"), "{err}");
}

#[test]
fn branch_then_plane() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("b.json");
    let out = run(&[
        "branch", "--n", "2", "--m", "2", "--steps", "8", "--ds", "0.01", "--truncation", "12", "--out",
        path(&file),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("masses"), "{err}");
    let branch: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(branch["points"].as_array().unwrap().len(), 17);

    let csv = dir.path().join("plane.csv");
    let out = run(&[
        "validate-plane",
        "--branch",
        path(&file),
        "--step",
        "-8",
        "--out",
        path(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("step -8"), "{report}");
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(rows, 1 + 241 * 96);

    assert_eq!(code(&run(&["validate-plane", "--branch", path(&file), "--step", "99"])), 4);
    let missing = dir.path().join("none.json");
    assert_eq!(code(&run(&["validate-plane", "--branch", path(&missing)])), 5);
}

#[test]
fn newton_failure_saves_partial_branch() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("b.json");
    let out = run(&[
        "branch",
        "--n",
        "2",
        "--m",
        "2",
        "--steps",
        "4",
        "--truncation",
        "12",
        "--max-newton-iters",
        "1",
        "--newton-tol",
        "1e-16",
        "--out",
        path(&file),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let branch: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert!(!branch["points"].as_array().unwrap().is_empty());
}

#[test]
fn legendre_values() {
    let out = run(&["legendre", "--n", "2", "--m", "0", "--z", "-1,0.5"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "z,P,P_tilde,P_normalized");
    let p: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!((p - (-0.125)).abs() < 1e-15);
    assert_eq!(code(&run(&["legendre", "--n", "2", "--m", "3", "--z", "0"])), 4);
    assert_eq!(code(&run(&["legendre", "--n", "2", "--m", "0", "--z", "1.5"])), 4);
}
