//! Time integration.
//!
//! `u` is advanced with Heun's method (explicit trapezoidal rule) under an
//! adaptive step bound that combines the diffusive, chemotactic and
//! reaction limits. For `τ = 1` the linear diffusion/decay part of the `v`
//! equation is treated implicitly with the trapezoidal rule, the production
//! and source terms explicitly (averaged over the step); for `τ = 0` the
//! chemical is recomputed from the elliptic balance after each stage.
//! Cells driven below zero are clamped and counted.

mod cg;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cg::{conjugate_gradient, CgReport};

use crate::discretization::{
    div_chemotactic_flux, div_nonlinear_diffusion, laplacian_neumann, max_gradient, Field, Grid,
};
use crate::model::{canonical_d, canonical_s_derivative, ModelParams};
use crate::{Error, Result};

/// Relative residual target for every linear solve.
pub const CG_TOLERANCE: f64 = 1e-11;
/// `max u` above this is reported as a growth indicator.
pub const GROWTH_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub t: f64,
}

impl State {
    pub fn new(u: Field, v: Field, t: f64) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::invalid("state", "u and v must share a grid"));
        }
        if !(u.is_finite() && v.is_finite() && t.is_finite()) {
            return Err(Error::invalid("state", "must be finite"));
        }
        u.ensure_nonnegative()?;
        v.ensure_nonnegative()?;
        Ok(State { u, v, t })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Running tally of positivity clamps.
    #[serde(skip)]
    pub clamp_count: u64,
    #[serde(skip)]
    last_dt: Option<f64>,
}

impl StepControl {
    pub fn new(
        dt_init: f64,
        dt_min: f64,
        dt_max: f64,
        cfl_safety: f64,
        t_end: f64,
    ) -> Result<Self> {
        let control = StepControl {
            dt_init,
            dt_min,
            dt_max,
            cfl_safety,
            t_end,
            clamp_count: 0,
            last_dt: None,
        };
        control.validate()?;
        Ok(control)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::invalid(
                "control",
                "requires 0 < dt_min <= dt_init <= dt_max",
            ));
        }
        if !self.dt_max.is_finite() {
            return Err(Error::invalid("control.dt_max", "must be finite"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return Err(Error::invalid("control.cfl_safety", "must lie in (0, 1)"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid("control.t_end", "must be positive"));
        }
        Ok(())
    }

    /// The step size used by the most recent step (before clipping to a
    /// sample time).
    pub fn last_dt(&self) -> Option<f64> {
        self.last_dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthKind {
    /// `max u` exceeded [`GROWTH_THRESHOLD`] or became non-finite.
    MaxExceeded,
    /// The admissible step fell below `dt_min`.
    DtUnderflow,
}

/// Numerical surrogate for possible unboundedness. Never a proof of blow-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthIndicator {
    pub kind: GrowthKind,
    pub t: f64,
    pub dt: f64,
    pub max_u: f64,
}

impl fmt::Display for GrowthIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            GrowthKind::MaxExceeded => "growth indicator: max u exceeded threshold",
            GrowthKind::DtUnderflow => "growth indicator: time step underflow",
        };
        write!(
            f,
            "{what} at t={} (dt={}, max u={})",
            self.t, self.dt, self.max_u
        )
    }
}

pub fn source_field(grid: &Grid, params: &ModelParams, t: f64) -> Field {
    Field::from_fn(*grid, |x| params.source.eval(x, t))
}

fn rhs_u_fields(u: &Field, v: &Field, params: &ModelParams) -> Result<Field> {
    let diffusion = div_nonlinear_diffusion(u, params.diffusion_exponent)?;
    let taxis = div_chemotactic_flux(u, v, params.sensitivity_exponent, params.sensitivity)?;
    let d1 = params.diffusion_u;
    let values = u
        .values()
        .iter()
        .zip(v.values())
        .zip(diffusion.values().iter().zip(taxis.values()))
        .map(|((&ui, &vi), (&di, &ti))| d1 * di + ti + params.reaction_u(ui, vi))
        .collect();
    Ok(Field::from_values_unchecked(*u.grid(), values))
}

/// Right-hand side of the `u` equation.
pub fn rhs_u(state: &State, params: &ModelParams) -> Result<Field> {
    rhs_u_fields(&state.u, &state.v, params)
}

/// Right-hand side of the parabolic `v` equation,
/// `d2 Δv + a u^m - b v + f(x, t)`.
pub fn rhs_v(state: &State, params: &ModelParams, t: f64) -> Field {
    let lap = laplacian_neumann(&state.v);
    let grid = state.grid();
    let values = (0..grid.len())
        .map(|i| {
            params.diffusion_v * lap.values()[i] + params.production_term(state.u.values()[i])
                - params.decay * state.v.values()[i]
                + params.source.eval(grid.center(i), t)
        })
        .collect();
    Field::from_values_unchecked(*grid, values)
}

/// `a u^m + f(·, t)` per cell.
fn chemical_supply(u: &Field, params: &ModelParams, t: f64) -> Vec<f64> {
    let grid = u.grid();
    u.values()
        .iter()
        .enumerate()
        .map(|(i, &ui)| params.production_term(ui) + params.source.eval(grid.center(i), t))
        .collect()
}

/// Applies `shift I + scale (b I - d2 Δ_h)`.
fn screened_operator<'a>(
    grid: &'a Grid,
    params: &'a ModelParams,
    shift: f64,
    scale: f64,
) -> impl Fn(&[f64], &mut [f64]) + 'a {
    let b = params.decay;
    let d2 = params.diffusion_v;
    move |x, out| {
        grid.laplacian_into(x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = shift * xi + scale * (b * xi - d2 * *o);
        }
    }
}

fn cg_iteration_cap(grid: &Grid) -> usize {
    10 * grid.len() + 200
}

/// Solves the elliptic balance `(b I - d2 Δ_h) v = a u^m + f(·, t)`.
pub fn solve_elliptic_v(u: &Field, params: &ModelParams, t: f64) -> Result<Field> {
    solve_elliptic_v_from(u, params, t, None).map(|(v, _)| v)
}

/// As [`solve_elliptic_v`], warm-started from `guess` and returning the CG
/// report.
///
/// With a guess the system is solved for the correction `v - guess`, so the
/// tolerance applies to the change rather than to `v` itself.
pub fn solve_elliptic_v_from(
    u: &Field,
    params: &ModelParams,
    t: f64,
    guess: Option<&Field>,
) -> Result<(Field, CgReport)> {
    let grid = *u.grid();
    let rhs = chemical_supply(u, params, t);
    let op = screened_operator(&grid, params, 0.0, 1.0);
    let cap = cg_iteration_cap(&grid);
    match guess {
        Some(g) => {
            let (x, report) = solve_from_guess(&op, &rhs, g.values(), CG_TOLERANCE, cap)?;
            Ok((Field::from_values_unchecked(grid, x), report))
        }
        None => {
            let mut x: Vec<f64> = rhs.iter().map(|r| r / params.decay).collect();
            let report = conjugate_gradient(&op, &rhs, &mut x, CG_TOLERANCE, cap)?;
            Ok((Field::from_values_unchecked(grid, x), report))
        }
    }
}

/// Solves `A x = rhs` as `A δ = rhs - A guess`, `x = guess + δ`.
fn solve_from_guess(
    op: &impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    guess: &[f64],
    tol: f64,
    cap: usize,
) -> Result<(Vec<f64>, CgReport)> {
    let mut residual = vec![0.0; rhs.len()];
    op(guess, &mut residual);
    for (r, b) in residual.iter_mut().zip(rhs) {
        *r = b - *r;
    }
    let mut delta = vec![0.0; rhs.len()];
    let report = conjugate_gradient(op, &residual, &mut delta, tol, cap)?;
    let x = guess.iter().zip(&delta).map(|(g, d)| g + d).collect();
    Ok((x, report))
}

/// One trapezoidal step of the linear part of the `v` equation:
/// `(I + dt/2 A) v_new = (I - dt/2 A) v + dt/2 (g_old + g_new)`, with
/// `A = b I - d2 Δ_h` and `g` the supply `a u^m + f`.
fn implicit_v_update(
    v: &Field,
    supply_old: &[f64],
    supply_new: &[f64],
    params: &ModelParams,
    dt: f64,
    guess: &Field,
) -> Result<Field> {
    let grid = *v.grid();
    let half = 0.5 * dt;
    let mut lap = vec![0.0; grid.len()];
    grid.laplacian_into(v.values(), &mut lap);
    let rhs: Vec<f64> = (0..grid.len())
        .map(|i| {
            let vi = v.values()[i];
            vi - half * (params.decay * vi - params.diffusion_v * lap[i])
                + half * (supply_old[i] + supply_new[i])
        })
        .collect();
    let op = screened_operator(&grid, params, 1.0, half);
    let (x, _) = solve_from_guess(
        &op,
        &rhs,
        guess.values(),
        CG_TOLERANCE,
        cg_iteration_cap(&grid),
    )?;
    Ok(Field::from_values_unchecked(grid, x))
}

/// Advances `v` with `u` held fixed, as used when checking that the
/// implicit chemical update relaxes to the elliptic balance.
pub fn relax_v_frozen(
    u: &Field,
    v: &Field,
    params: &ModelParams,
    t: f64,
    dt: f64,
) -> Result<Field> {
    let supply = chemical_supply(u, params, t);
    implicit_v_update(v, &supply, &supply, params, dt, v)
}

fn euler_stage(u: &Field, rate: &Field, dt: f64, clamps: &mut u64) -> Field {
    let values = u
        .values()
        .iter()
        .zip(rate.values())
        .map(|(&ui, &ri)| clamp_nonnegative(ui + dt * ri, clamps))
        .collect();
    Field::from_values_unchecked(*u.grid(), values)
}

fn clamp_nonnegative(value: f64, clamps: &mut u64) -> f64 {
    if value < 0.0 {
        *clamps += 1;
        0.0
    } else {
        value
    }
}

/// Stable step bound for the explicit `u` update.
///
/// Uses `safety / (λ_diff + λ_adv + λ_react)` where
/// `λ_diff = 2 n d1 max D(u) / h²`, `λ_adv = χ max|S'(u)| max|∇v| / h`
/// and `λ_react` bounds the per-unit-mass reaction rate; the result is
/// below each individual limit.
pub fn stable_dt(state: &State, params: &ModelParams, safety: f64) -> f64 {
    let grid = state.grid();
    let h = grid.min_h();
    let u_max = state.u.max().max(0.0);
    let d_max = canonical_d(u_max, params.diffusion_exponent);
    let s_prime_max = state
        .u
        .values()
        .iter()
        .map(|&s| canonical_s_derivative(s, params.sensitivity_exponent))
        .fold(0.0, f64::max);
    let diffusive = 2.0 * grid.dim() as f64 * params.diffusion_u * d_max / (h * h);
    let advective = params.sensitivity * s_prime_max * max_gradient(&state.v) / h;
    let reactive = params.growth_rate * (1.0 + u_max.powf(params.logistic_exponent - 1.0))
        + params.lethality * state.v.max().max(0.0);
    safety / (diffusive + advective + reactive + f64::EPSILON)
}

/// Advances `state` by one adaptive step, not beyond `control.t_end`.
pub fn step(state: &State, params: &ModelParams, control: &mut StepControl) -> Result<State> {
    let t_end = control.t_end;
    step_until(state, params, control, t_end)
}

/// Advances by one adaptive step, clipped so that `t` does not pass `t_stop`.
pub fn step_until(
    state: &State,
    params: &ModelParams,
    control: &mut StepControl,
    t_stop: f64,
) -> Result<State> {
    let mut dt = stable_dt(state, params, control.cfl_safety).min(control.dt_max);
    dt = match control.last_dt {
        Some(prev) => dt.min(2.0 * prev),
        None => dt.min(control.dt_init),
    };
    if dt < control.dt_min {
        return Err(Error::Divergence(GrowthIndicator {
            kind: GrowthKind::DtUnderflow,
            t: state.t,
            dt,
            max_u: state.u.max(),
        }));
    }
    control.last_dt = Some(dt);
    let remaining = t_stop - state.t;
    let (dt, t_new) = if dt >= remaining {
        (remaining, t_stop)
    } else {
        (dt, state.t + dt)
    };

    let mut clamps = 0;
    let next = if params.is_parabolic() {
        heun_parabolic(state, params, dt, t_new, &mut clamps)?
    } else {
        heun_elliptic(state, params, dt, t_new, &mut clamps)?
    };
    control.clamp_count += clamps;

    let max_u = next.u.max();
    if !(max_u <= GROWTH_THRESHOLD) || !next.v.is_finite() {
        return Err(Error::Divergence(GrowthIndicator {
            kind: GrowthKind::MaxExceeded,
            t: t_new,
            dt,
            max_u,
        }));
    }
    Ok(next)
}

fn heun_parabolic(
    state: &State,
    params: &ModelParams,
    dt: f64,
    t_new: f64,
    clamps: &mut u64,
) -> Result<State> {
    let State { u, v, t } = state;
    let rate0 = rhs_u_fields(u, v, params)?;
    let u1 = euler_stage(u, &rate0, dt, clamps);

    let supply0 = chemical_supply(u, params, *t);
    let supply1 = chemical_supply(&u1, params, t_new);
    let v1 = implicit_v_update(v, &supply0, &supply1, params, dt, v)?;

    let rate1 = rhs_u_fields(&u1, &v1, params)?;
    let values = u
        .values()
        .iter()
        .zip(u1.values())
        .zip(rate1.values())
        .map(|((&u0, &u1), &r1)| clamp_nonnegative(0.5 * (u0 + u1 + dt * r1), clamps))
        .collect();
    let u_new = Field::from_values_unchecked(*u.grid(), values);

    let supply_new = chemical_supply(&u_new, params, t_new);
    let mut v_new = implicit_v_update(v, &supply0, &supply_new, params, dt, &v1)?;
    for x in v_new.values_mut() {
        *x = clamp_nonnegative(*x, clamps);
    }
    Ok(State {
        u: u_new,
        v: v_new,
        t: t_new,
    })
}

fn heun_elliptic(
    state: &State,
    params: &ModelParams,
    dt: f64,
    t_new: f64,
    clamps: &mut u64,
) -> Result<State> {
    let State { u, v, .. } = state;
    let rate0 = rhs_u_fields(u, v, params)?;
    let u1 = euler_stage(u, &rate0, dt, clamps);
    let (v1, _) = solve_elliptic_v_from(&u1, params, t_new, Some(v))?;

    let rate1 = rhs_u_fields(&u1, &v1, params)?;
    let values = u
        .values()
        .iter()
        .zip(u1.values())
        .zip(rate1.values())
        .map(|((&u0, &u1), &r1)| clamp_nonnegative(0.5 * (u0 + u1 + dt * r1), clamps))
        .collect();
    let u_new = Field::from_values_unchecked(*u.grid(), values);
    let (v_new, _) = solve_elliptic_v_from(&u_new, params, t_new, Some(&v1))?;
    Ok(State {
        u: u_new,
        v: v_new,
        t: t_new,
    })
}

/// Sample instants `t0, t0 + Δ, ...` up to and including `t_end`.
pub fn sample_times(t0: f64, t_end: f64, interval: f64) -> Vec<f64> {
    let mut times = vec![t0];
    let mut k = 1u64;
    loop {
        let t = t0 + k as f64 * interval;
        if t >= t_end * (1.0 - 1e-12) {
            break;
        }
        times.push(t);
        k += 1;
    }
    if t_end > t0 {
        times.push(t_end);
    }
    times
}

/// Integrates to `control.t_end`, calling `observe` at the initial state and
/// at every sample instant. On failure the error is returned together with
/// the last successfully computed state.
#[allow(clippy::result_large_err)]
pub fn integrate_sampled(
    initial: State,
    params: &ModelParams,
    control: &mut StepControl,
    sample_interval: f64,
    mut observe: impl FnMut(&State, &StepControl),
) -> std::result::Result<State, (Error, State)> {
    let times = sample_times(initial.t, control.t_end, sample_interval);
    let mut state = initial;
    observe(&state, control);
    for &target in &times[1..] {
        while state.t < target {
            match step_until(&state, params, control, target) {
                Ok(next) => state = next,
                Err(e) => return Err((e, state)),
            }
        }
        observe(&state, control);
    }
    Ok(state)
}

/// Initial data: a constant level plus a smooth cosine perturbation that
/// respects the zero-flux condition. Values are relative, so
/// `u₀ = u_level (1 + perturbation · p(x))` with `|p| <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub u_level: f64,
    /// Chemical level for `τ = 1`. Defaults to the homogeneous balance
    /// `(a u_level^m + f̄) / b`. Ignored for `τ = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_level: Option<f64>,
    pub perturbation: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
    pub seed: u64,
}

fn default_modes() -> usize {
    3
}

impl InitialData {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_level.is_finite() && self.u_level >= 0.0) {
            return Err(Error::invalid("initial.u_level", "must be nonnegative"));
        }
        if let Some(v) = self.v_level {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid("initial.v_level", "must be nonnegative"));
            }
        }
        if !(self.perturbation >= 0.0 && self.perturbation < 1.0) {
            return Err(Error::invalid("initial.perturbation", "must lie in [0, 1)"));
        }
        if self.modes == 0 {
            return Err(Error::invalid("initial.modes", "must be at least 1"));
        }
        Ok(())
    }
}

/// Random normalised cosine series with `max |p| <= 1` and zero discrete
/// mean.
fn cosine_perturbation(grid: &Grid, modes: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let ext = grid.extents();
    let ky_max = if grid.dim() == 2 { modes } else { 0 };
    let mut terms = Vec::new();
    for kx in 0..=modes {
        for ky in 0..=ky_max {
            if kx + ky == 0 || kx + ky > modes {
                continue;
            }
            terms.push((kx, ky, rng.gen_range(-1.0..1.0)));
        }
    }
    let norm: f64 = terms.iter().map(|t| f64::abs(t.2)).sum();
    let norm = if norm > 0.0 { norm } else { 1.0 };
    (0..grid.len())
        .map(|i| {
            let [x, y] = grid.center(i);
            terms
                .iter()
                .map(|&(kx, ky, c)| {
                    let fx = (kx as f64 * std::f64::consts::PI * x / ext[0]).cos();
                    let fy = if grid.dim() == 2 {
                        (ky as f64 * std::f64::consts::PI * y / ext[1]).cos()
                    } else {
                        1.0
                    };
                    c * fx * fy
                })
                .sum::<f64>()
                / norm
        })
        .collect()
}

/// Builds the initial state. For `τ = 0` the chemical is the elliptic
/// solution for `u₀`.
pub fn initial_state(grid: &Grid, params: &ModelParams, init: &InitialData) -> Result<State> {
    init.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
    let p = cosine_perturbation(grid, init.modes, &mut rng);
    let u_vals = p
        .iter()
        .map(|pi| init.u_level * (1.0 + init.perturbation * pi))
        .collect();
    let u = Field::new(*grid, u_vals)?;
    let v = if params.is_parabolic() {
        let level = init.v_level.unwrap_or_else(|| {
            (params.production_term(init.u_level) + params.source.mean(grid)) / params.decay
        });
        let q = cosine_perturbation(grid, init.modes, &mut rng);
        Field::new(
            *grid,
            q.iter()
                .map(|qi| level * (1.0 + init.perturbation * qi))
                .collect(),
        )?
    } else {
        solve_elliptic_v(&u, params, 0.0)?
    };
    State::new(u, v, 0.0)
}
