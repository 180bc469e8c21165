//! Single-trajectory driver and parameter sweeps producing phase tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{dist_inf, RunReport, Verdict};
use crate::discretization::Grid;
use crate::model::{check_existence_gate, equilibria, EquilibriumSet, GateReport, ModelParams};
use crate::solver::{
    initial_state, integrate_sampled, InitialData, State, StepControl, GROWTH_THRESHOLD,
};
use crate::{Error, Result};

/// Grid description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(&self.extents, &self.cells)
    }
}

/// Everything needed to integrate one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: ModelParams,
    pub grid: Grid,
    pub control: StepControl,
    pub initial: InitialData,
    pub sample_interval: f64,
}

/// Integrates one trajectory and records diagnostics at every sample.
///
/// Invalid inputs are returned as errors. Solver failures after the start
/// are recorded in the report (`growth` or `failure`) together with the
/// last good state.
pub fn simulate(traj: &Trajectory) -> Result<RunReport> {
    simulate_with(traj, |_, _| {})
}

/// As [`simulate`], also handing each sampled state and its index to
/// `on_sample`.
pub fn simulate_with(
    traj: &Trajectory,
    mut on_sample: impl FnMut(usize, &State),
) -> Result<RunReport> {
    let params = &traj.params;
    params.validate()?;
    traj.control.validate()?;
    if !(traj.sample_interval.is_finite() && traj.sample_interval > 0.0) {
        return Err(Error::invalid("sample_interval", "must be positive"));
    }
    let fbar = params.source.mean(&traj.grid);
    let eq = if params.production_exponent == 1.0 {
        Some(equilibria(params, fbar)?)
    } else {
        None
    };
    let initial = initial_state(&traj.grid, params, &traj.initial)?;
    let mut report = RunReport::new(&traj.grid, eq, fbar / params.decay);
    let mut control = traj.control.clone();
    control.clamp_count = 0;

    let mut index = 0;
    let outcome = integrate_sampled(
        initial,
        params,
        &mut control,
        traj.sample_interval,
        |state, ctl| {
            report.record(state, params, ctl.last_dt().unwrap_or(ctl.dt_init));
            on_sample(index, state);
            index += 1;
        },
    );
    let final_state = match outcome {
        Ok(state) => state,
        Err((Error::Divergence(indicator), state)) => {
            report.growth = Some(indicator);
            state
        }
        Err((e, state)) => {
            report.failure = Some(e.to_string());
            state
        }
    };
    report.finish(final_state, control.clamp_count);
    if report.clamp_count > 0 {
        let note = format!("nonnegativity clamps applied: {}", report.clamp_count);
        report.notes.push(note);
    }
    Ok(report)
}

/// Classification thresholds shared by single runs and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Final `dist_inf` below which a run counts as converged.
    pub convergence: f64,
    /// Early window `[0, early]` whose `sup u` sets the boundedness reference.
    pub early: f64,
    /// Boundedness is judged on samples with `t >= late`.
    pub late: f64,
    /// Allowed growth of `sup u` over its early maximum.
    pub growth_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            convergence: 1e-3,
            early: 1.0,
            late: 5.0,
            growth_factor: 10.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence > 0.0) {
            return Err(Error::invalid("thresholds.convergence", "must be positive"));
        }
        if !(self.early >= 0.0 && self.late >= self.early) {
            return Err(Error::invalid(
                "thresholds.late",
                "must be at least thresholds.early",
            ));
        }
        if !(self.growth_factor >= 1.0) {
            return Err(Error::invalid(
                "thresholds.growth_factor",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    BoundedConvergedCoexistence,
    BoundedConvergedExtinction,
    BoundedNoConvergence,
    GrowthIndicator,
    SolverFailure,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::BoundedConvergedCoexistence => "bounded-converged-coexistence",
            Outcome::BoundedConvergedExtinction => "bounded-converged-extinction",
            Outcome::BoundedNoConvergence => "bounded-no-convergence",
            Outcome::GrowthIndicator => "growth-indicator",
            Outcome::SolverFailure => "solver-failure",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies a completed run against the homogeneous steady states.
pub fn classify_outcome(
    report: &RunReport,
    eq: Option<&EquilibriumSet>,
    thresholds: &Thresholds,
) -> Outcome {
    if report.growth.is_some() || report.max_sup_u() > GROWTH_THRESHOLD {
        return Outcome::GrowthIndicator;
    }
    let state = match (&report.failure, &report.final_state) {
        (None, Some(state)) => state,
        _ => return Outcome::SolverFailure,
    };
    let Some(eq) = eq else {
        return Outcome::BoundedNoConvergence;
    };
    if let Some(star) = eq.coexistence {
        if dist_inf(state, star) <= thresholds.convergence {
            return Outcome::BoundedConvergedCoexistence;
        }
    }
    if dist_inf(state, eq.semi) <= thresholds.convergence {
        return Outcome::BoundedConvergedExtinction;
    }
    Outcome::BoundedNoConvergence
}

/// True when `sup u` after `late` stays within `growth_factor` times its
/// maximum over `[0, early]`.
pub fn is_bounded(report: &RunReport, thresholds: &Thresholds) -> bool {
    if report.growth.is_some() || report.failure.is_some() {
        return false;
    }
    let samples = report.times.iter().zip(&report.sup_u_series);
    let early = samples
        .clone()
        .filter(|(&t, _)| t <= thresholds.early)
        .map(|(_, &s)| s)
        .fold(0.0, f64::max);
    samples
        .filter(|(&t, _)| t >= thresholds.late)
        .all(|(_, &s)| s <= thresholds.growth_factor * early)
}

/// Verdict that the run ended within `threshold` of its target state.
pub fn convergence_check(report: &RunReport, threshold: f64) -> Verdict {
    let dist = report.final_dist_inf();
    let target = report
        .target
        .map_or("none".to_string(), |t| format!("({}, {})", t.u, t.v));
    Verdict {
        check: "convergence".to_string(),
        passed: dist <= threshold,
        margin: threshold - dist,
        detail: format!("target={target} final_dist_inf={dist}"),
    }
}

/// Verdict mirroring a gate report.
pub fn gate_verdict(gate: &GateReport) -> Verdict {
    Verdict {
        check: format!("{}-gate", gate.kind).to_lowercase(),
        passed: gate.passed,
        margin: gate.margin,
        detail: gate.detail.clone(),
    }
}

/// Parameters that a sweep axis may vary. `fbar` scales the source bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweptParam {
    D1,
    D2,
    Chi,
    R,
    Mu,
    A,
    B,
    M,
    Kappa,
    Alpha,
    Beta,
    Fbar,
}

impl SweptParam {
    pub fn name(self) -> &'static str {
        match self {
            SweptParam::D1 => "d1",
            SweptParam::D2 => "d2",
            SweptParam::Chi => "chi",
            SweptParam::R => "r",
            SweptParam::Mu => "mu",
            SweptParam::A => "a",
            SweptParam::B => "b",
            SweptParam::M => "m",
            SweptParam::Kappa => "kappa",
            SweptParam::Alpha => "alpha",
            SweptParam::Beta => "beta",
            SweptParam::Fbar => "fbar",
        }
    }

    pub fn apply(self, params: &mut ModelParams, value: f64) {
        match self {
            SweptParam::D1 => params.diffusion_u = value,
            SweptParam::D2 => params.diffusion_v = value,
            SweptParam::Chi => params.sensitivity = value,
            SweptParam::R => params.growth_rate = value,
            SweptParam::Mu => params.lethality = value,
            SweptParam::A => params.production = value,
            SweptParam::B => params.decay = value,
            SweptParam::M => params.production_exponent = value,
            SweptParam::Kappa => params.logistic_exponent = value,
            SweptParam::Alpha => params.diffusion_exponent = value,
            SweptParam::Beta => params.sensitivity_exponent = value,
            SweptParam::Fbar => params.source.set_bound(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: SweptParam,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    /// Evenly spaced nodes including both ends; a single node sits at `min`.
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + step * i as f64
                }
            })
            .collect()
    }
}

fn default_max_runs() -> usize {
    400
}

fn default_sample_interval() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub seed: u64,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
    pub axes: Vec<Axis>,
    pub model: ModelParams,
    pub grid: GridSpec,
    pub control: StepControl,
    pub initial: InitialData,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::InvalidSweep(
                "between 1 and 2 axes are required".into(),
            ));
        }
        for (i, axis) in self.axes.iter().enumerate() {
            let name = axis.param.name();
            if axis.count == 0 {
                return Err(Error::InvalidSweep(format!(
                    "axis {name} has an empty range"
                )));
            }
            if !(axis.min.is_finite() && axis.max.is_finite() && axis.min <= axis.max) {
                return Err(Error::InvalidSweep(format!(
                    "axis {name} needs finite min <= max"
                )));
            }
            if self.axes[..i].iter().any(|other| other.param == axis.param) {
                return Err(Error::InvalidSweep(format!("axis {name} is swept twice")));
            }
        }
        let total = self.total_runs();
        if total > self.max_runs {
            return Err(Error::InvalidSweep(format!(
                "{total} runs exceed the cap of {}",
                self.max_runs
            )));
        }
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return Err(Error::invalid("sample_interval", "must be positive"));
        }
        self.thresholds.validate()?;
        self.grid.build()?;
        self.control.validate()?;
        self.initial.validate()
    }

    pub fn total_runs(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Node coordinates in axis order, first axis outermost.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let mut nodes = vec![Vec::new()];
        for axis in &self.axes {
            let values = axis.values();
            nodes = nodes
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut node = prefix.clone();
                        node.push(v);
                        node
                    })
                })
                .collect();
        }
        nodes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub coords: Vec<f64>,
    pub gate_pass: bool,
    pub outcome: Outcome,
    /// `sup u` stayed within the growth factor of its early maximum.
    pub bounded: bool,
    /// NaN when the fit had too few samples.
    pub fitted_rate: f64,
    pub final_dist_inf: f64,
}

fn run_point(
    spec: &SweepSpec,
    grid: Grid,
    index: usize,
    coords: &[f64],
) -> (PhasePoint, Option<RunReport>) {
    let mut params = spec.model.clone();
    for (axis, &value) in spec.axes.iter().zip(coords) {
        axis.param.apply(&mut params, value);
    }
    let gate_pass = params.validate().is_ok() && check_existence_gate(&params, grid.dim()).passed;
    let mut initial = spec.initial.clone();
    initial.seed = spec.seed.wrapping_add(index as u64);
    let traj = Trajectory {
        params,
        grid,
        control: spec.control.clone(),
        initial,
        sample_interval: spec.sample_interval,
    };
    match simulate(&traj) {
        Ok(report) => {
            let point = PhasePoint {
                coords: coords.to_vec(),
                gate_pass,
                outcome: classify_outcome(&report, report.equilibria.as_ref(), &spec.thresholds),
                bounded: is_bounded(&report, &spec.thresholds),
                fitted_rate: report.fit.map_or(f64::NAN, |f| f.rate),
                final_dist_inf: report.final_dist_inf(),
            };
            (point, Some(report))
        }
        Err(_) => (
            PhasePoint {
                coords: coords.to_vec(),
                gate_pass,
                outcome: Outcome::SolverFailure,
                bounded: false,
                fitted_rate: f64::NAN,
                final_dist_inf: f64::NAN,
            },
            None,
        ),
    }
}

/// Runs every node of the sweep in parallel. The table follows node order
/// and each point uses seed `spec.seed + index`.
pub fn run_sweep_detailed(spec: &SweepSpec) -> Result<Vec<(PhasePoint, Option<RunReport>)>> {
    spec.validate()?;
    let grid = spec.grid.build()?;
    let nodes = spec.nodes();
    Ok(nodes
        .par_iter()
        .enumerate()
        .map(|(i, coords)| run_point(spec, grid, i, coords))
        .collect())
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<PhasePoint>> {
    Ok(run_sweep_detailed(spec)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}
