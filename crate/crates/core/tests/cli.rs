use std::fs;
use std::path::Path;
use std::process::Command;

use lethal_chemotaxis::cli::{
    parse_config, parse_config_str, run, run_sweep_cmd, RunConfig, SERIES_HEADER,
};
use lethal_chemotaxis::model::equilibria;
use lethal_chemotaxis::Error;

fn config_text(dir: &Path, tau: u8, extra_initial: &str) -> String {
    format!(
        r#"
[model]
d1 = 1.0
d2 = 1.0
chi = 1.0
r = 1.0
mu = 0.5
a = 1.0
b = 1.0
m = 1.0
kappa = 2.0
alpha = 0.5
beta = 0.25
tau = {tau}

[model.source]
kind = "constant"
amplitude = 0.2

[grid]
extents = [1.0]
cells = [32]

[control]
dt_init = 1e-3
dt_min = 1e-10
dt_max = 0.05
cfl_safety = 0.4
t_end = 2.0

[initial]
u_level = 0.6
perturbation = 0.1
seed = 3
{extra_initial}

[output]
dir = "{}"
sample_interval = 0.25
"#,
        dir.display()
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn parse_csv(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn kappa_below_one_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_text(dir.path(), 1, "").replace("kappa = 2.0", "kappa = 0.5");
    let err = parse_config(&write_config(dir.path(), &text)).unwrap_err();
    assert_eq!(err.to_string(), "kappa must exceed 1");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn tau_outside_zero_one_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_text(dir.path(), 2, "");
    assert_eq!(
        parse_config_str(&text).unwrap_err().to_string(),
        "tau must be 0 or 1"
    );
}

#[test]
fn missing_and_unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let missing = config_text(dir.path(), 1, "").replace("chi = 1.0\n", "");
    let err = parse_config_str(&missing).unwrap_err().to_string();
    assert!(err.contains("chi"), "{err}");

    let unknown = config_text(dir.path(), 1, "").replace("chi = 1.0", "chi = 1.0\ngamma = 2.0");
    let err = parse_config_str(&unknown).unwrap_err().to_string();
    assert!(err.contains("gamma"), "{err}");
}

#[test]
fn config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config_str(&config_text(dir.path(), 1, "")).unwrap();
    let again: RunConfig = parse_config_str(&config.to_toml().unwrap()).unwrap();
    assert_eq!(config, again);
}

#[test]
fn equilibrium_run_passes_every_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let star = {
        let cfg = parse_config_str(&config_text(dir.path(), 1, "")).unwrap();
        equilibria(&cfg.model, 0.2).unwrap().coexistence.unwrap()
    };
    let text = config_text(dir.path(), 1, &format!("v_level = {}", star.v))
        .replace("u_level = 0.6", &format!("u_level = {}", star.u))
        .replace("perturbation = 0.1", "perturbation = 0.0");
    let out = run(&parse_config_str(&text).unwrap()).unwrap();
    assert_eq!(out.exit_code, 0);
    assert!(out.report.all_passed());

    let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(series.lines().next().unwrap(), SERIES_HEADER);
    let rows = parse_csv(&series);
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[9] <= 1e-10));

    let verdicts = fs::read_to_string(dir.path().join("verdicts.csv")).unwrap();
    let lines: Vec<&str> = verdicts.lines().collect();
    assert_eq!(lines[0], "check,passed,margin");
    assert!(lines[1..]
        .iter()
        .all(|l| l.split(',').nth(1) == Some("true")));
    assert!(lines.iter().any(|l| l.starts_with("existence-gate")));
    assert!(lines.iter().any(|l| l.starts_with("mass-bound")));
    assert!(lines.iter().any(|l| l.starts_with("convergence")));
    assert!(dir.path().join("plot/series.csv").exists());
}

#[test]
fn series_csv_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&parse_config_str(&config_text(dir.path(), 1, "")).unwrap()).unwrap();
    let rows = parse_csv(&fs::read_to_string(dir.path().join("series.csv")).unwrap());
    let r = &out.report;
    for (i, row) in rows.iter().enumerate() {
        let expected = [
            r.times[i],
            r.mass_series[i],
            r.sup_u_series[i],
            r.sup_v_series[i],
            r.grad_v_sup_series[i],
            r.e1_series[i],
            r.e2_series[i],
            r.f1_series[i],
            r.f2_series[i],
            r.dist_inf_series[i],
        ];
        for (a, b) in row.iter().zip(expected) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn elliptic_energy_has_no_chemical_part() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_text(dir.path(), 0, "").replace(
        "sample_interval = 0.25",
        "sample_interval = 0.25\nsnapshots = 1",
    );
    let config = parse_config_str(&text).unwrap();
    let out = run(&config).unwrap();
    let star = equilibria(&config.model, 0.2).unwrap().coexistence.unwrap();

    let snapshot = fs::read_to_string(dir.path().join("u_0.csv")).unwrap();
    let mut lines = snapshot.lines();
    assert_eq!(lines.next(), Some("cells,32"));
    assert_eq!(lines.next(), Some("extents,1"));
    let u: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
    let h = 1.0 / 32.0;
    let entropy: f64 = u
        .iter()
        .map(|&x| (x - star.u - star.u * (x / star.u).ln()) * h)
        .sum();
    let e1 = *out.report.e1_series.last().unwrap();
    assert!(
        (e1 - config.model.production * entropy).abs() <= 1e-12 * (1.0 + e1.abs()),
        "{e1} vs {entropy}"
    );
    assert!(dir.path().join("v_0.csv").exists());
    assert!(dir.path().join("plot/profiles.csv").exists());
}

#[test]
fn unwritable_output_fails_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let target = blocker.join("sub");
    let text = config_text(&target, 1, "").replace("t_end = 2.0", "t_end = 1e9");
    let start = std::time::Instant::now();
    let err = run(&parse_config_str(&text).unwrap()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.exit_code(), 3);
    assert!(start.elapsed().as_secs() < 5);
}

#[test]
fn step_underflow_writes_growth_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_text(dir.path(), 1, "").replace("dt_min = 1e-10", "dt_min = 1e-3");
    let text = text.replace("cells = [32]", "cells = [256]");
    let out = run(&parse_config_str(&text).unwrap()).unwrap();
    assert_eq!(out.exit_code, 2);
    let growth = fs::read_to_string(dir.path().join("growth.csv")).unwrap();
    assert!(growth.contains("dt-underflow"));
    assert!(dir.path().join("series.csv").exists());
}

const SWEEP: &str = r#"
seed = 11
sample_interval = 0.5

[[axes]]
param = "mu"
min = 0.2
max = 0.6
count = 3

[[axes]]
param = "chi"
min = 0.0
max = 1.0
count = 3

[model]
d1 = 1.0
d2 = 1.0
chi = 1.0
r = 1.0
mu = 0.5
a = 1.0
b = 1.0
m = 1.0
kappa = 2.0
alpha = 0.5
beta = 0.25
tau = 1

[model.source]
kind = "constant"
amplitude = 0.2

[grid]
extents = [1.0]
cells = [16]

[control]
dt_init = 1e-3
dt_min = 1e-10
dt_max = 0.05
cfl_safety = 0.4
t_end = 1.0

[initial]
u_level = 0.5
perturbation = 0.1
seed = 0
"#;

#[test]
fn toy_sweep_is_ordered_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.toml");
    fs::write(&spec, SWEEP).unwrap();
    let a_dir = dir.path().join("a");
    let b_dir = dir.path().join("b");
    let table = run_sweep_cmd(&spec, &a_dir, None).unwrap();
    run_sweep_cmd(&spec, &b_dir, None).unwrap();
    assert_eq!(table.len(), 9);
    let a = fs::read(a_dir.join("phase.csv")).unwrap();
    let b = fs::read(b_dir.join("phase.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "mu,chi,gate_pass,outcome,bounded,fitted_rate,final_dist_inf"
    );
    assert_eq!(lines.len(), 10);
    assert!(lines[2].starts_with("0.2,0.5,"));
}

#[test]
fn all_gate_fail_sweep_still_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.toml");
    let text = SWEEP
        .replace(
            "param = \"mu\"\nmin = 0.2\nmax = 0.6",
            "param = \"beta\"\nmin = 2.0\nmax = 2.5",
        )
        .replace(
            "count = 3\n\n[[axes]]\nparam = \"chi\"\nmin = 0.0\nmax = 1.0\ncount = 3",
            "count = 2",
        );
    fs::write(&spec, text).unwrap();
    let exe = env!("CARGO_BIN_EXE_lethal-chemotaxis");
    let status = Command::new(exe)
        .args([
            "sweep",
            spec.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let table = fs::read_to_string(dir.path().join("phase.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("false")));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_lethal-chemotaxis");
    let good = write_config(dir.path(), &config_text(&dir.path().join("out"), 1, ""));
    let gates = Command::new(exe)
        .args(["check-gates", good.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(gates.status.code(), Some(0));
    let stdout = String::from_utf8(gates.stdout).unwrap();
    assert!(stdout.contains("existence gate: pass"));
    assert!(stdout.contains("stability gate: pass"));

    let eq = Command::new(exe)
        .args(["equilibria", good.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(eq.status.code(), Some(0));

    let sim = Command::new(exe)
        .args([
            "simulate",
            good.to_str().unwrap(),
            "--seed",
            "9",
            "--snapshots",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(
        sim.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&sim.stderr)
    );
    assert!(dir.path().join("out/u_1.csv").exists());

    let bad_dir = tempfile::tempdir().unwrap();
    let bad = write_config(bad_dir.path(), &config_text(dir.path(), 2, ""));
    let out = Command::new(exe)
        .args(["simulate", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let run_cfg = parse_config(&root.join("coexistence.toml")).unwrap();
    assert_eq!(run_cfg.output.snapshots, 5);
    let sweep = lethal_chemotaxis::cli::parse_sweep(&root.join("beta_sweep.toml")).unwrap();
    assert_eq!(sweep.total_runs(), 20);
}
