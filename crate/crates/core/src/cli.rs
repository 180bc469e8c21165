//! Configuration files, run orchestration and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{mass_bound_check, RunReport};
use crate::experiments::{
    convergence_check, gate_verdict, run_sweep, simulate_with, GridSpec, PhasePoint, SweepSpec,
    Trajectory,
};
use crate::model::{
    check_existence_gate, check_stability_gate, equilibria, EquilibriumSet, GateReport, ModelParams,
};
use crate::solver::{sample_times, InitialData, StepControl};
use crate::{Error, Result};

/// Exit code for a completed run whose enabled verdicts did not all pass.
pub const EXIT_VERDICT_FAILED: i32 = 4;

pub const SERIES_HEADER: &str = "t,mass,sup_u,sup_v,grad_v_sup,E1,E2,f1,f2,dist_inf";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Gate,
    MassBound,
    Convergence,
}

fn all_checks() -> Vec<Check> {
    vec![Check::Gate, Check::MassBound, Check::Convergence]
}

fn default_true() -> bool {
    true
}

fn default_convergence_threshold() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub sample_interval: f64,
    /// Number of field snapshots spread evenly over the samples.
    #[serde(default)]
    pub snapshots: usize,
    #[serde(default = "default_true")]
    pub plot: bool,
    #[serde(default = "all_checks")]
    pub checks: Vec<Check>,
    #[serde(default = "default_convergence_threshold")]
    pub convergence_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub control: StepControl,
    pub initial: InitialData,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.grid.build()?;
        self.control.validate()?;
        self.initial.validate()?;
        if !(self.output.sample_interval.is_finite() && self.output.sample_interval > 0.0) {
            return Err(Error::invalid("output.sample_interval", "must be positive"));
        }
        if !(self.output.convergence_threshold > 0.0) {
            return Err(Error::invalid(
                "output.convergence_threshold",
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let config: RunConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_sweep(path: &Path) -> Result<SweepSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: SweepSpec =
        toml::from_str(&text).map_err(|e| Error::Config(e.message().to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Creates `dir` and proves it writable with a probe file.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Sample indices receiving a snapshot: `count` indices spread over
/// `0..samples`, always including the last.
pub fn snapshot_indices(samples: usize, count: usize) -> Vec<usize> {
    if samples == 0 || count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![samples - 1];
    }
    let mut indices: Vec<usize> = (0..count)
        .map(|j| ((j * (samples - 1)) as f64 / (count - 1) as f64).round() as usize)
        .collect();
    indices.dedup();
    indices
}

struct Snapshot {
    t: f64,
    u: Vec<f64>,
    v: Vec<f64>,
}

fn series_csv(report: &RunReport) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for i in 0..report.times.len() {
        let row = [
            report.times[i],
            report.mass_series[i],
            report.sup_u_series[i],
            report.sup_v_series[i],
            report.grad_v_sup_series[i],
            report.e1_series[i],
            report.e2_series[i],
            report.f1_series[i],
            report.f2_series[i],
            report.dist_inf_series[i],
        ];
        let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn verdicts_csv(report: &RunReport) -> String {
    let mut out = String::from("check,passed,margin\n");
    for v in &report.verdicts {
        let _ = writeln!(out, "{},{},{}", v.check, v.passed, v.margin);
    }
    out
}

fn field_csv(grid: &GridSpec, values: &[f64]) -> String {
    let join = |xs: Vec<String>| xs.join(",");
    let mut out = format!(
        "cells,{}\nextents,{}\n",
        join(grid.cells.iter().map(|c| c.to_string()).collect()),
        join(grid.extents.iter().map(|e| format!("{e}")).collect())
    );
    for x in values {
        let _ = writeln!(out, "{x}");
    }
    out
}

fn plot_series_csv(report: &RunReport) -> String {
    let names: Vec<&str> = SERIES_HEADER.split(',').skip(1).collect();
    let columns = [
        &report.mass_series,
        &report.sup_u_series,
        &report.sup_v_series,
        &report.grad_v_sup_series,
        &report.e1_series,
        &report.e2_series,
        &report.f1_series,
        &report.f2_series,
        &report.dist_inf_series,
    ];
    let mut out = String::from("t,quantity,value\n");
    for (name, column) in names.iter().zip(columns) {
        for (t, x) in report.times.iter().zip(column) {
            let _ = writeln!(out, "{t},{name},{x}");
        }
    }
    out
}

fn plot_profiles_csv(config: &RunConfig, snapshots: &[(usize, Snapshot)]) -> Result<String> {
    let grid = config.grid.build()?;
    let mut out = String::from("snapshot,t,x,y,field,value\n");
    for (k, (_, snap)) in snapshots.iter().enumerate() {
        for (field, values) in [("u", &snap.u), ("v", &snap.v)] {
            for (i, x) in values.iter().enumerate() {
                let [cx, cy] = grid.center(i);
                let _ = writeln!(out, "{k},{},{cx},{cy},{field},{x}", snap.t);
            }
        }
    }
    Ok(out)
}

fn growth_csv(report: &RunReport) -> Option<String> {
    if let Some(g) = report.growth {
        let kind = match g.kind {
            crate::solver::GrowthKind::MaxExceeded => "max-exceeded",
            crate::solver::GrowthKind::DtUnderflow => "dt-underflow",
        };
        return Some(format!(
            "kind,t,dt,max_u\n{kind},{},{},{}\n",
            g.t, g.dt, g.max_u
        ));
    }
    report.failure.as_ref().map(|msg| {
        format!(
            "kind,message\nsolver-failure,\"{}\"\n",
            msg.replace('"', "'")
        )
    })
}

fn gate_reports(params: &ModelParams, n: usize, eq: Option<&EquilibriumSet>) -> Vec<GateReport> {
    let mut gates = vec![check_existence_gate(params, n)];
    if let Some(eq) = eq.filter(|e| e.coexistence.is_some()) {
        if let Ok(gate) = check_stability_gate(params, eq) {
            gates.push(gate);
        }
    }
    gates
}

/// Outcome of [`run`]: the populated report and the process exit code.
#[derive(Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub exit_code: i32,
}

/// Runs one simulation and writes `series.csv`, `verdicts.csv`, optional
/// snapshots and the `plot/` directory into `config.output.dir`.
///
/// The output directory is checked before any simulation starts. A
/// diverging run still writes its partial series plus `growth.csv`, and
/// reports exit code 2.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let dir = &config.output.dir;
    ensure_writable(dir)?;
    let grid = config.grid.build()?;
    let traj = Trajectory {
        params: config.model.clone(),
        grid,
        control: config.control.clone(),
        initial: config.initial.clone(),
        sample_interval: config.output.sample_interval,
    };

    let samples = sample_times(0.0, config.control.t_end, config.output.sample_interval).len();
    let wanted = snapshot_indices(samples, config.output.snapshots);
    let mut snapshots: Vec<(usize, Snapshot)> = Vec::new();
    let mut report = simulate_with(&traj, |index, state| {
        if wanted.contains(&index) {
            snapshots.push((
                index,
                Snapshot {
                    t: state.t,
                    u: state.u.values().to_vec(),
                    v: state.v.values().to_vec(),
                },
            ));
        }
    })?;

    for check in &config.output.checks {
        match check {
            Check::Gate => {
                let gates = gate_reports(&config.model, grid.dim(), report.equilibria.as_ref());
                report.verdicts.extend(gates.iter().map(gate_verdict));
            }
            Check::MassBound => report.verdicts.push(mass_bound_check(&report)),
            Check::Convergence => {
                let verdict = convergence_check(&report, config.output.convergence_threshold);
                report.verdicts.push(verdict);
            }
        }
    }

    write_file(&dir.join("series.csv"), &series_csv(&report))?;
    write_file(&dir.join("verdicts.csv"), &verdicts_csv(&report))?;
    if let Some(text) = growth_csv(&report) {
        write_file(&dir.join("growth.csv"), &text)?;
    }
    for (k, (_, snap)) in snapshots.iter().enumerate() {
        write_file(
            &dir.join(format!("u_{k}.csv")),
            &field_csv(&config.grid, &snap.u),
        )?;
        write_file(
            &dir.join(format!("v_{k}.csv")),
            &field_csv(&config.grid, &snap.v),
        )?;
    }
    if config.output.plot {
        let plot = dir.join("plot");
        fs::create_dir_all(&plot).map_err(|e| Error::io(&plot, e))?;
        write_file(&plot.join("series.csv"), &plot_series_csv(&report))?;
        if !snapshots.is_empty() {
            write_file(
                &plot.join("profiles.csv"),
                &plot_profiles_csv(config, &snapshots)?,
            )?;
        }
    }

    let exit_code = if report.growth.is_some() || report.failure.is_some() {
        2
    } else if report.all_passed() {
        0
    } else {
        EXIT_VERDICT_FAILED
    };
    Ok(RunOutput { report, exit_code })
}

pub fn phase_csv(spec: &SweepSpec, table: &[PhasePoint]) -> String {
    let mut out = String::new();
    for axis in &spec.axes {
        out.push_str(axis.param.name());
        out.push(',');
    }
    out.push_str("gate_pass,outcome,bounded,fitted_rate,final_dist_inf\n");
    for p in table {
        for c in &p.coords {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.gate_pass, p.outcome, p.bounded, p.fitted_rate, p.final_dist_inf
        );
    }
    out
}

/// Runs the sweep in `spec_path` and writes `phase.csv` into `out_dir`.
pub fn run_sweep_cmd(
    spec_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<Vec<PhasePoint>> {
    let mut spec = parse_sweep(spec_path)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    ensure_writable(out_dir)?;
    let table = run_sweep(&spec)?;
    write_file(&out_dir.join("phase.csv"), &phase_csv(&spec, &table))?;
    Ok(table)
}

/// Gate reports for a configuration, without simulating.
pub fn check_gates(config: &RunConfig) -> Result<Vec<GateReport>> {
    let grid = config.grid.build()?;
    let eq = steady_states(config).ok();
    Ok(gate_reports(&config.model, grid.dim(), eq.as_ref()))
}

pub fn steady_states(config: &RunConfig) -> Result<EquilibriumSet> {
    let grid = config.grid.build()?;
    equilibria(&config.model, config.model.source.mean(&grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_indices_spread_and_include_last() {
        assert_eq!(snapshot_indices(11, 1), vec![10]);
        assert_eq!(snapshot_indices(11, 3), vec![0, 5, 10]);
        assert_eq!(snapshot_indices(3, 5), vec![0, 1, 2]);
        assert!(snapshot_indices(11, 0).is_empty());
    }
}
