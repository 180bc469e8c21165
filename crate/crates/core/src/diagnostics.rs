//! Trajectory diagnostics: mass, sup norms, Lyapunov energies, dissipation
//! integrals, distances to steady states and decay-rate fits.

use serde::Serialize;

use crate::discretization::{compensated_sum, integrate, max_gradient, Field, Grid};
use crate::model::{EquilibriumSet, ModelParams, SteadyState};
use crate::solver::{GrowthIndicator, State};
use crate::{Error, Result};

/// Floor applied to `u` inside the entropy term of `E₁`.
pub const ENTROPY_FLOOR: f64 = 1e-300;
/// Relative slack allowed on the mass bound.
pub const MASS_BOUND_SLACK: f64 = 1e-2;
/// Minimum number of usable samples for a decay fit.
pub const MIN_FIT_SAMPLES: usize = 8;

fn cell_sum(grid: &Grid, values: impl Iterator<Item = f64>) -> f64 {
    compensated_sum(values) * grid.cell_volume()
}

/// `s - 1 - ln s`, switching to the series in `w = s - 1` near `s = 1` to
/// avoid cancellation.
fn relative_entropy(s: f64) -> f64 {
    let w = s - 1.0;
    if w.abs() < 1e-2 {
        // w²/2 - w³/3 + w⁴/4 - ... truncated after w¹⁰.
        let mut term = w * w;
        let mut sum = 0.0;
        for k in 2..=10 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * term / k as f64;
            term *= w;
        }
        sum
    } else {
        w - s.ln()
    }
}

/// `E₁ = a ∫(u - u* - u* ln(u/u*)) + τ (μ/2) ∫(v - v*)²`.
pub fn lyapunov_e1(state: &State, eq: SteadyState, params: &ModelParams) -> f64 {
    let grid = state.grid();
    let star = eq.u;
    let entropy = cell_sum(
        grid,
        state.u.values().iter().map(|&u| {
            let s = u.max(ENTROPY_FLOOR) / star;
            star * relative_entropy(s)
        }),
    );
    let chemical = if params.is_parabolic() {
        0.5 * params.lethality
            * cell_sum(
                grid,
                state.v.values().iter().map(|&v| (v - eq.v) * (v - eq.v)),
            )
    } else {
        0.0
    };
    params.production * entropy + chemical
}

/// `E₂ = a ∫u + τ (μ/2) ∫(v - v̄)²`.
pub fn lyapunov_e2(state: &State, params: &ModelParams, v_bar: f64) -> f64 {
    let mass = integrate(&state.u);
    let chemical = if params.is_parabolic() {
        let grid = state.grid();
        0.5 * params.lethality
            * cell_sum(
                grid,
                state.v.values().iter().map(|&v| (v - v_bar) * (v - v_bar)),
            )
    } else {
        0.0
    };
    params.production * mass + chemical
}

/// `f₁ = ∫(u - u*)² + ∫(v - v*)²`.
pub fn dissipation_f1(state: &State, eq: SteadyState) -> f64 {
    squared_distance(state, eq)
}

/// `f₂ = ∫u² + ∫(v - v̄)²`.
pub fn dissipation_f2(state: &State, v_bar: f64) -> f64 {
    squared_distance(state, SteadyState { u: 0.0, v: v_bar })
}

fn squared_distance(state: &State, eq: SteadyState) -> f64 {
    let grid = state.grid();
    cell_sum(
        grid,
        state.u.values().iter().map(|&u| (u - eq.u) * (u - eq.u)),
    ) + cell_sum(
        grid,
        state.v.values().iter().map(|&v| (v - eq.v) * (v - eq.v)),
    )
}

/// `‖u - u_e‖_∞ + ‖v - v_e‖_∞`.
pub fn dist_inf(state: &State, eq: SteadyState) -> f64 {
    sup_distance(&state.u, eq.u) + sup_distance(&state.v, eq.v)
}

fn sup_distance(field: &Field, level: f64) -> f64 {
    field
        .values()
        .iter()
        .fold(0.0, |acc, &x| acc.max((x - level).abs()))
}

/// Decades a series must fall before a flat tail counts as round-off.
pub const PLATEAU_DECADES: f64 = 6.0;

/// Index where a decayed series settles on its terminal plateau.
///
/// The plateau level is the largest of the final five samples; the plateau
/// is the longest suffix staying within a factor 10 of it. It only counts
/// when the series peak before it sits at least `10^PLATEAU_DECADES` above
/// that level, so slowly varying series are never truncated.
pub fn plateau_start(series: &[f64]) -> Option<usize> {
    let n = series.len();
    if n < 5 {
        return None;
    }
    let level = series[n - 5..].iter().copied().fold(0.0, f64::max);
    let mut k = n;
    while k > 0 && series[k - 1] <= 10.0 * level {
        k -= 1;
    }
    let peak = series[..k]
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(0.0, f64::max);
    (k > 0 && peak >= 10f64.powf(PLATEAU_DECADES) * level).then_some(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// `-d ln(series)/dt`; positive for decay.
    pub rate: f64,
    /// RMS of the log-space residuals.
    pub residual: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub samples: usize,
}

/// Least-squares exponential rate of `series`.
///
/// Samples that are non-finite or below `1e2 ε` are discarded. The window is
/// the final half of `[times[0], t_last]`, where `t_last` is the last
/// resolved sample: the last usable one, or the start of a terminal
/// round-off plateau (see [`plateau_start`]).
pub fn fit_decay_rate(times: &[f64], series: &[f64]) -> Result<DecayFit> {
    if times.len() != series.len() {
        return Err(Error::invalid(
            "series",
            "must have the same length as times",
        ));
    }
    let floor = 1e2 * f64::EPSILON;
    let usable = |s: f64| s.is_finite() && s > floor;
    let last = match series.iter().rposition(|&s| usable(s)) {
        Some(i) => i,
        None => {
            return Err(Error::InsufficientData {
                usable: 0,
                required: MIN_FIT_SAMPLES,
            })
        }
    };
    let last = plateau_start(&series[..=last]).unwrap_or(last);
    let start = 0.5 * (times[0] + times[last]);
    let points: Vec<(f64, f64)> = times[..=last]
        .iter()
        .zip(&series[..=last])
        .filter(|&(&t, &s)| t >= start && usable(s))
        .map(|(&t, &s)| (t, s.ln()))
        .collect();
    if points.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            usable: points.len(),
            required: MIN_FIT_SAMPLES,
        });
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - t_mean) * (p.1 - y_mean)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let residual = (points
        .iter()
        .map(|p| (p.1 - (y_mean + slope * (p.0 - t_mean))).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        residual,
        window_start: points[0].0,
        window_end: points[points.len() - 1].0,
        samples: points.len(),
    })
}

/// `max{y₀, (B/A)^(1/p)}`: the ceiling for positive solutions of
/// `y' + A y^p <= B`.
pub fn comparison_bound(y0: f64, a: f64, b: f64, p: f64) -> f64 {
    y0.max((b / a).powf(1.0 / p))
}

/// Coefficients `(A, B, p)` placing the total mass `y = ∫u` in the form
/// `y' + A y^p <= B`.
///
/// Integrating the `u` equation and applying Jensen's inequality gives
/// `y' <= r y - A₀ y^κ` with `A₀ = r / |Ω|^(κ-1)`. Half of the damping term
/// absorbs the linear growth: `r y - (A₀/2) y^κ <= B` for all `y >= 0`, with
/// `B` the maximum of the left side. Hence `A = A₀ / 2`, `p = κ`.
pub fn mass_comparison_coefficients(growth_rate: f64, kappa: f64, measure: f64) -> (f64, f64, f64) {
    let a0 = growth_rate / measure.powf(kappa - 1.0);
    let a = 0.5 * a0;
    let y_peak = (growth_rate / (kappa * a)).powf(1.0 / (kappa - 1.0));
    let b = growth_rate * y_peak * (1.0 - 1.0 / kappa);
    (a, b, kappa)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

/// Diagnostics recorded along one trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub measure: f64,
    pub times: Vec<f64>,
    pub mass_series: Vec<f64>,
    pub sup_u_series: Vec<f64>,
    pub sup_v_series: Vec<f64>,
    /// Max one-sided difference quotient of `v` ("discrete gradient sup").
    pub grad_v_sup_series: Vec<f64>,
    /// NaN when no coexistence state exists.
    pub e1_series: Vec<f64>,
    pub e2_series: Vec<f64>,
    /// NaN when no coexistence state exists.
    pub f1_series: Vec<f64>,
    pub f2_series: Vec<f64>,
    /// Distance to [`RunReport::target`].
    pub dist_inf_series: Vec<f64>,
    /// Step size in force when each sample was taken.
    pub dt_series: Vec<f64>,
    /// `max{∫u₀, |Ω|}`.
    pub mass_bound_m: f64,
    pub equilibria: Option<EquilibriumSet>,
    /// Coexistence state when present, otherwise `(0, f̄/b)`.
    pub target: Option<SteadyState>,
    pub fit: Option<DecayFit>,
    pub clamp_count: u64,
    pub growth: Option<GrowthIndicator>,
    pub failure: Option<String>,
    pub final_state: Option<State>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
}

impl RunReport {
    /// Empty report for a run on `grid`. `equilibria` is `None` when the
    /// steady-state analysis does not apply (`m != 1`); `v_bar` is always
    /// `f̄ / b`.
    pub fn new(grid: &Grid, equilibria: Option<EquilibriumSet>, v_bar: f64) -> Self {
        let target = Some(match equilibria.as_ref().and_then(|e| e.coexistence) {
            Some(star) => star,
            None => SteadyState { u: 0.0, v: v_bar },
        });
        let mut notes = Vec::new();
        if equilibria.as_ref().is_some_and(|e| e.source_averaged) {
            notes.push("steady states use the mean of a non-constant source".to_string());
        }
        RunReport {
            measure: grid.measure(),
            equilibria,
            target,
            notes,
            ..Default::default()
        }
    }

    pub fn coexistence(&self) -> Option<SteadyState> {
        self.equilibria.as_ref().and_then(|e| e.coexistence)
    }

    pub fn v_bar(&self) -> f64 {
        match (&self.equilibria, self.target) {
            (Some(e), _) => e.semi.v,
            (None, Some(t)) => t.v,
            (None, None) => f64::NAN,
        }
    }

    pub fn record(&mut self, state: &State, params: &ModelParams, dt: f64) {
        let v_bar = self.v_bar();
        let star = self.coexistence();
        self.times.push(state.t);
        self.mass_series.push(integrate(&state.u));
        self.sup_u_series.push(state.u.max_abs());
        self.sup_v_series.push(state.v.max_abs());
        self.grad_v_sup_series.push(max_gradient(&state.v));
        self.e1_series
            .push(star.map_or(f64::NAN, |s| lyapunov_e1(state, s, params)));
        self.e2_series.push(lyapunov_e2(state, params, v_bar));
        self.f1_series
            .push(star.map_or(f64::NAN, |s| dissipation_f1(state, s)));
        self.f2_series.push(dissipation_f2(state, v_bar));
        self.dist_inf_series
            .push(self.target.map_or(f64::NAN, |t| dist_inf(state, t)));
        self.dt_series.push(dt);
        if self.times.len() == 1 {
            self.mass_bound_m = self.mass_series[0].max(self.measure);
        }
    }

    /// Fits the decay rate of `dist_inf` and stores the final state.
    pub fn finish(&mut self, final_state: State, clamp_count: u64) {
        self.clamp_count = clamp_count;
        self.final_state = Some(final_state);
        self.fit = fit_decay_rate(&self.times, &self.dist_inf_series).ok();
        if let Some(fit) = self.fit {
            self.notes.push(format!(
                "decay fit window [{}, {}] over {} samples",
                fit.window_start, fit.window_end, fit.samples
            ));
        }
    }

    pub fn final_dist_inf(&self) -> f64 {
        self.dist_inf_series.last().copied().unwrap_or(f64::NAN)
    }

    pub fn max_sup_u(&self) -> f64 {
        self.sup_u_series.iter().copied().fold(0.0, f64::max)
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Every mass sample must stay below `M (1 + 10⁻²)`; reports the worst
/// ratio `∫u / M`.
pub fn mass_bound_check(report: &RunReport) -> Verdict {
    let m = report.mass_bound_m;
    let worst = report
        .mass_series
        .iter()
        .map(|&mass| mass / m)
        .fold(f64::NEG_INFINITY, f64::max);
    Verdict {
        check: "mass-bound".to_string(),
        passed: worst <= 1.0 + MASS_BOUND_SLACK,
        margin: 1.0 + MASS_BOUND_SLACK - worst,
        detail: format!("M={m} worst_ratio={worst}"),
    }
}
