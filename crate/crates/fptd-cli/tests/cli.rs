//! End-to-end checks of the binary: exit codes, determinism of the emitted
//! files, and the error-record contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fptd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fptd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

const BROWNIAN: &str = r#"
[model]
killing = 0.0
[model.psi]
preset = "brownian"
[model.gamma]
preset = "dirac0"

[solve]
q = [0.5]
level = 0.0
x = [1.0]

[mc]
q = [0.5]
level = 0.0
x = [1.0]
n = 2000
dt = 1e-3
seed = 42
budget = 30.0

[output]
dir = "out"
prefix = "t"
"#;

#[test]
fn solve_emits_the_closed_form_value() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), BROWNIAN).unwrap();
    let out = fptd(dir.path(), &["solve", "--config", "run.toml", "--quiet"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("out/t_solve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "q,x,l,value,k_truncation,tail_bound,status"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let value: f64 = row[3].parse().unwrap();
    assert!((value - (-1.0f64).exp()).abs() < 1e-12);
    assert_eq!(row[6], "converged");
    // scale record + summary written
    assert!(dir.path().join("out/t_scale_q0.json").exists());
    assert!(dir.path().join("out/t_summary.json").exists());
}

#[test]
fn lattice_preset_emits_product_formula_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BROWNIAN
        .replace("preset = \"dirac0\"", "preset = \"lattice\"")
        .replace(
            "q = [0.5]\nlevel = 0.0\nx = [1.0]\n\n[mc]",
            "q = [1.0]\nlevel = 0.0\nx = [1.0]\n\n[mc]",
        );
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = fptd(dir.path(), &["solve", "--config", "run.toml", "--quiet"]);
    assert!(out.status.success());
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/t_scale_q0.json")).unwrap())
            .unwrap();
    let atoms = record["measure"]["atoms"].as_array().unwrap();
    // q = 1, psi = l^2/2: weights 1 / prod_{l<=k} psi(l) = 1, 2, 1, 2/9, ...
    let expect = [1.0, 2.0, 1.0, 2.0 / 9.0];
    for (k, e) in expect.iter().enumerate() {
        let loc = atoms[k][0].as_f64().unwrap();
        let mass = atoms[k][1].as_f64().unwrap();
        assert_eq!(loc, k as f64);
        assert!((mass - e).abs() < 1e-12 * e, "k={k}: {mass} vs {e}");
    }
}

#[test]
fn negative_q_is_a_config_error_with_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BROWNIAN.replace("q = [0.5]", "q = [-0.5]");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = fptd(dir.path(), &["solve", "--config", "run.toml", "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["status"], "error");
    assert_eq!(summary["kind"], "config");
    assert!(summary["error"]
        .as_str()
        .unwrap()
        .contains("q must be positive"));
}

#[test]
fn mc_runs_are_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), BROWNIAN).unwrap();
    let out = fptd(dir.path(), &["mc", "--config", "run.toml", "--quiet"]);
    assert!(out.status.success());
    let first = fs::read(dir.path().join("out/t_mc.csv")).unwrap();
    fs::remove_file(dir.path().join("out/t_mc.csv")).unwrap();
    let out = fptd(dir.path(), &["mc", "--config", "run.toml", "--quiet"]);
    assert!(out.status.success());
    let second = fs::read(dir.path().join("out/t_mc.csv")).unwrap();
    assert_eq!(first, second);

    // a different seed changes the bytes
    let out = fptd(
        dir.path(),
        &["mc", "--config", "run.toml", "--quiet", "--seed", "7"],
    );
    assert!(out.status.success());
    let third = fs::read(dir.path().join("out/t_mc.csv")).unwrap();
    assert_ne!(first, third);
}

#[test]
fn censoring_is_reported_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BROWNIAN.replace("budget = 30.0", "budget = 0.5");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = fptd(dir.path(), &["mc", "--config", "run.toml", "--quiet"]);
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/t_summary.json")).unwrap())
            .unwrap();
    assert!(!summary["warnings"].as_array().unwrap().is_empty());
    let censored = summary["rows"][0]["n_censored"].as_u64().unwrap();
    assert!(censored > 0);
}

#[test]
fn compare_passes_on_the_brownian_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BROWNIAN}\n[compare]\n");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = fptd(dir.path(), &["compare", "--config", "run.toml", "--quiet"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/t_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["verdict"], "pass");
    let csv = fs::read_to_string(dir.path().join("out/t_compare.csv")).unwrap();
    assert!(csv.starts_with("q,x,l,solver,mc_mean,mc_std_error,z\n"));
}

#[test]
fn check_cm_flags_the_non_cm_velocity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{BROWNIAN}\n[check_cm]\nq = 0.5\nlevel = 0.0\na_source = \"one-plus-sin-squared\"\n"
    );
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = fptd(dir.path(), &["check-cm", "--config", "run.toml", "--quiet"]);
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/t_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["fptd_curve"]["pass"], true);
    assert_eq!(summary["one_over_a"]["pass"], false);
    assert!(
        summary["one_over_a"]["violation"]["order"]
            .as_u64()
            .unwrap()
            <= 2
    );
}

#[test]
fn numerical_failures_exit_one_with_record() {
    // volterra on a density vanishing near zero
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[model]
killing = 0.0
[model.psi]
preset = "brownian"
[model.gamma]
density = { origin = 0.0, spacing = 0.5, masses = [0.0, 0.0, 1.0, 1.0] }

[solve]
q = [1.0]
level = 0.0
x = [1.0]
method = "volterra"
grid = { span = 4.0, step = 0.5 }

[output]
dir = "out"
prefix = "t"
"#;
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = fptd(dir.path(), &["solve", "--config", "run.toml", "--quiet"]);
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/t_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["status"], "error");
    assert_eq!(summary["kind"], "numerical");
}

#[test]
fn missing_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = fptd(dir.path(), &["solve", "--config", "nope.toml", "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
}
