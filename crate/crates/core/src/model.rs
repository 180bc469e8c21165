//! Model parameters, constitutive functions, existence and stability gates
//! and homogeneous steady states.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::discretization::Grid;
use crate::{Error, Result};

/// Nonlinear diffusivity `D(s) = (1 + s)^α`.
#[inline]
pub fn canonical_d(s: f64, alpha: f64) -> f64 {
    (1.0 + s).powf(alpha)
}

/// Chemotactic sensitivity `S(s) = s (1 + s)^β`, with `S(0) = 0`.
#[inline]
pub fn canonical_s(s: f64, beta: f64) -> f64 {
    s * (1.0 + s).powf(beta)
}

/// `S'(s) = (1 + s)^β + β s (1 + s)^(β - 1)`.
#[inline]
pub fn canonical_s_derivative(s: f64, beta: f64) -> f64 {
    let base = (1.0 + s).powf(beta - 1.0);
    base * (1.0 + s + beta * s)
}

/// External chemical supply `f(x, t)`, bounded by `0 <= f <= amplitude`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    Constant {
        amplitude: f64,
    },
    /// `K exp(-|x - c|² / (2 w²))`.
    GaussianBump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `K (1 + sin(2πt / P)) / 2`.
    TimePeriodic {
        amplitude: f64,
        period: f64,
    },
}

impl SourceSpec {
    pub fn constant(amplitude: f64) -> Self {
        SourceSpec::Constant { amplitude }
    }

    /// The bound `K` with `0 <= f <= K`.
    pub fn bound(&self) -> f64 {
        match *self {
            SourceSpec::Constant { amplitude }
            | SourceSpec::GaussianBump { amplitude, .. }
            | SourceSpec::TimePeriodic { amplitude, .. } => amplitude,
        }
    }

    pub fn set_bound(&mut self, value: f64) {
        match self {
            SourceSpec::Constant { amplitude }
            | SourceSpec::GaussianBump { amplitude, .. }
            | SourceSpec::TimePeriodic { amplitude, .. } => *amplitude = value,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SourceSpec::Constant { .. })
    }

    pub fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        match self {
            SourceSpec::Constant { amplitude } => *amplitude,
            SourceSpec::GaussianBump {
                amplitude,
                center,
                width,
            } => {
                let r2: f64 = center
                    .iter()
                    .zip(x.iter())
                    .map(|(c, xi)| (xi - c) * (xi - c))
                    .sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            SourceSpec::TimePeriodic { amplitude, period } => {
                let phase = 2.0 * std::f64::consts::PI * t / period;
                0.5 * amplitude * (1.0 + phase.sin())
            }
        }
    }

    /// Space-time mean used as the constant `f̄` in the steady-state
    /// relations. Exact for constant sources.
    pub fn mean(&self, grid: &Grid) -> f64 {
        match self {
            SourceSpec::Constant { amplitude } => *amplitude,
            SourceSpec::TimePeriodic { amplitude, .. } => 0.5 * amplitude,
            SourceSpec::GaussianBump { .. } => {
                let n = grid.len();
                (0..n).map(|i| self.eval(grid.center(i), 0.0)).sum::<f64>() / n as f64
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.bound();
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::invalid(
                "source.amplitude",
                "must be finite and nonnegative",
            ));
        }
        match self {
            SourceSpec::Constant { .. } => {}
            SourceSpec::GaussianBump { center, width, .. } => {
                if center.is_empty() || center.len() > 2 || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid(
                        "source.center",
                        "must list 1 or 2 finite coordinates",
                    ));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::invalid("source.width", "must be positive"));
                }
            }
            SourceSpec::TimePeriodic { period, .. } => {
                if !(period.is_finite() && *period > 0.0) {
                    return Err(Error::invalid("source.period", "must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Coefficients and exponents of the system. Config keys use the
/// conventional symbol names (`d1`, `chi`, `kappa`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Species diffusion coefficient `d1`.
    #[serde(rename = "d1")]
    pub diffusion_u: f64,
    /// Chemical diffusion coefficient `d2`.
    #[serde(rename = "d2")]
    pub diffusion_v: f64,
    /// Chemorepulsion sensitivity `χ`.
    #[serde(rename = "chi")]
    pub sensitivity: f64,
    /// Logistic rate `r`.
    #[serde(rename = "r")]
    pub growth_rate: f64,
    /// Lethality coefficient `μ`.
    #[serde(rename = "mu")]
    pub lethality: f64,
    /// Production rate `a`.
    #[serde(rename = "a")]
    pub production: f64,
    /// Decay rate `b`.
    #[serde(rename = "b")]
    pub decay: f64,
    /// Production exponent `m`.
    #[serde(rename = "m")]
    pub production_exponent: f64,
    /// Logistic exponent `κ`.
    #[serde(rename = "kappa")]
    pub logistic_exponent: f64,
    /// Diffusion exponent `α` in `D(s) = (1 + s)^α`.
    #[serde(rename = "alpha")]
    pub diffusion_exponent: f64,
    /// Sensitivity exponent `β` in `S(s) = s (1 + s)^β`.
    #[serde(rename = "beta")]
    pub sensitivity_exponent: f64,
    /// 1 for the fully parabolic system, 0 for the parabolic-elliptic one.
    pub tau: u8,
    pub source: SourceSpec,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d1", self.diffusion_u),
            ("d2", self.diffusion_v),
            ("r", self.growth_rate),
            ("mu", self.lethality),
            ("a", self.production),
            ("b", self.decay),
            ("m", self.production_exponent),
            ("alpha", self.diffusion_exponent),
            ("beta", self.sensitivity_exponent),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.sensitivity.is_finite() && self.sensitivity >= 0.0) {
            return Err(Error::invalid("chi", "must be nonnegative"));
        }
        if !(self.logistic_exponent.is_finite() && self.logistic_exponent > 1.0) {
            return Err(Error::invalid("kappa", "must exceed 1"));
        }
        if self.tau > 1 {
            return Err(Error::invalid("tau", "must be 0 or 1"));
        }
        self.source.validate()
    }

    pub fn checked(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn is_parabolic(&self) -> bool {
        self.tau == 1
    }

    /// Reaction part of the `u` equation: `r u (1 - u^(κ-1)) - μ u v`.
    #[inline]
    pub fn reaction_u(&self, u: f64, v: f64) -> f64 {
        self.growth_rate * u * (1.0 - u.powf(self.logistic_exponent - 1.0)) - self.lethality * u * v
    }

    /// Production term `a u^m`.
    #[inline]
    pub fn production_term(&self, u: f64) -> f64 {
        self.production * u.powf(self.production_exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateKind {
    Existence,
    Stability,
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateKind::Existence => f.write_str("existence"),
            GateKind::Stability => f.write_str("stability"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateReport {
    pub kind: GateKind,
    pub passed: bool,
    /// Distance to the boundary of the admissible region; positive inside.
    pub margin: f64,
    pub detail: String,
}

impl fmt::Display for GateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} gate: {} (margin {}) {}",
            self.kind,
            if self.passed { "pass" } else { "fail" },
            self.margin,
            self.detail
        )
    }
}

/// Global boundedness condition: `β + m < α + 2/n` for `τ = 1`,
/// `max{β, β + m} < α + 2/n` for `τ = 0`. Strict.
///
/// Panics if `n == 0`.
pub fn check_existence_gate(params: &ModelParams, n: usize) -> GateReport {
    assert!(n >= 1, "spatial dimension must be at least 1");
    let alpha = params.diffusion_exponent;
    let beta = params.sensitivity_exponent;
    let m = params.production_exponent;
    let rhs = alpha + 2.0 / n as f64;
    let lhs = if params.is_parabolic() {
        beta + m
    } else {
        beta.max(beta + m)
    };
    GateReport {
        kind: GateKind::Existence,
        passed: lhs < rhs,
        margin: rhs - lhs,
        detail: format!("lhs={lhs} threshold={rhs} n={n} tau={}", params.tau),
    }
}

/// Coexistence stability condition: `χ² < 4 d1 d2 μ / (a u*)` and `2β <= α`.
pub fn check_stability_gate(params: &ModelParams, eq: &EquilibriumSet) -> Result<GateReport> {
    let star = eq.coexistence.ok_or(Error::NoCoexistence)?;
    let bound = 4.0 * params.diffusion_u * params.diffusion_v * params.lethality
        / (params.production * star.u);
    let chi2 = params.sensitivity * params.sensitivity;
    let exponent_margin = params.diffusion_exponent - 2.0 * params.sensitivity_exponent;
    let sensitivity_margin = bound - chi2;
    let mut detail = format!("chi^2={chi2} bound={bound} alpha-2beta={exponent_margin}");
    if params.logistic_exponent < 2.0 {
        detail.push_str(" [kappa < 2: outside the stability result's hypotheses]");
    }
    Ok(GateReport {
        kind: GateKind::Stability,
        passed: chi2 < bound && exponent_margin >= 0.0,
        margin: sensitivity_margin.min(exponent_margin),
        detail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Coexistence,
    SemiCoexistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSet {
    pub regime: Regime,
    /// `(u*, v*)`, present iff `b r > f̄ μ`.
    pub coexistence: Option<SteadyState>,
    /// `(0, f̄ / b)`.
    pub semi: SteadyState,
    pub source_mean: f64,
    /// Set when `f̄` is the mean of a non-constant source.
    pub source_averaged: bool,
}

impl fmt::Display for EquilibriumSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let regime = match self.regime {
            Regime::Coexistence => "coexistence",
            Regime::SemiCoexistence => "semi-coexistence",
        };
        writeln!(f, "regime: {regime}")?;
        writeln!(f, "fbar: {}", self.source_mean)?;
        if self.source_averaged {
            writeln!(
                f,
                "note: fbar is the mean of a non-constant source; states are approximate"
            )?;
        }
        if let Some(s) = self.coexistence {
            writeln!(f, "coexistence: u*={} v*={}", s.u, s.v)?;
        }
        write!(f, "semi-coexistence: u={} v={}", self.semi.u, self.semi.v)
    }
}

/// Relative residuals of the two homogeneous steady-state relations
/// `r u (1 - u^(κ-1)) - μ u v = 0` and `a u - b v + f̄ = 0`.
///
/// Each residual is divided by the sum of the magnitudes of its terms, so
/// the value is scale-free and zero when every term vanishes.
pub fn relation_residuals(params: &ModelParams, fbar: f64, state: SteadyState) -> (f64, f64) {
    let SteadyState { u, v } = state;
    let growth = params.growth_rate * u;
    let crowding = params.growth_rate * u * u.powf(params.logistic_exponent - 1.0);
    let killing = params.lethality * u * v;
    let first = relative(
        growth - crowding - killing,
        growth.abs() + crowding.abs() + killing.abs(),
    );

    let produced = params.production * u;
    let decayed = params.decay * v;
    let second = relative(
        produced - decayed + fbar,
        produced.abs() + decayed.abs() + fbar.abs(),
    );
    (first, second)
}

fn relative(residual: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        residual.abs()
    } else {
        residual.abs() / scale
    }
}

/// Homogeneous steady states for production exponent `m = 1`.
pub fn equilibria(params: &ModelParams, fbar: f64) -> Result<EquilibriumSet> {
    params.validate()?;
    if params.production_exponent != 1.0 {
        return Err(Error::invalid(
            "m",
            "must equal 1 for the steady-state analysis",
        ));
    }
    if !(fbar.is_finite() && fbar >= 0.0) {
        return Err(Error::invalid("fbar", "must be finite and nonnegative"));
    }
    let b = params.decay;
    let semi = SteadyState {
        u: 0.0,
        v: fbar / b,
    };
    let coexists = b * params.growth_rate > fbar * params.lethality;
    let coexistence = if !coexists {
        None
    } else if params.logistic_exponent == 2.0 {
        Some(coexistence_closed_form(params, fbar))
    } else {
        Some(coexistence_by_root(params, fbar)?)
    };
    Ok(EquilibriumSet {
        regime: if coexists {
            Regime::Coexistence
        } else {
            Regime::SemiCoexistence
        },
        coexistence,
        semi,
        source_mean: fbar,
        source_averaged: !params.source.is_constant(),
    })
}

/// `u* = (b r - f̄ μ) / (b r + a μ)`, valid for `κ = 2`.
pub fn coexistence_closed_form(params: &ModelParams, fbar: f64) -> SteadyState {
    let br = params.decay * params.growth_rate;
    let u = (br - fbar * params.lethality) / (br + params.production * params.lethality);
    SteadyState {
        u,
        v: (params.production * u + fbar) / params.decay,
    }
}

/// Solves `r (1 - u^(κ-1)) = μ (a u + f̄) / b` on `(0, 1)` by bisection
/// followed by safeguarded Newton polishing.
pub fn coexistence_by_root(params: &ModelParams, fbar: f64) -> Result<SteadyState> {
    let r = params.growth_rate;
    let p = params.logistic_exponent - 1.0;
    let mu_over_b = params.lethality / params.decay;
    let a = params.production;
    let g = |u: f64| r * (1.0 - u.powf(p)) - mu_over_b * (a * u + fbar);
    let dg = |u: f64| -r * p * u.powf(p - 1.0) - mu_over_b * a;

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (g_lo, g_hi) = (g(lo), g(hi));
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::DegenerateParameters(format!(
            "no sign change for the coexistence relation on (0, 1): g(0)={g_lo}, g(1)={g_hi}"
        )));
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..50 {
        let gu = g(u);
        if gu == 0.0 {
            break;
        }
        if gu > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let mut next = u - gu / dg(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 4.0 * f64::EPSILON * u {
            u = next;
            break;
        }
        u = next;
    }
    Ok(SteadyState {
        u,
        v: (a * u + fbar) / params.decay,
    })
}

#[cfg(test)]
pub(crate) fn reference_params() -> ModelParams {
    ModelParams {
        diffusion_u: 1.0,
        diffusion_v: 1.0,
        sensitivity: 1.0,
        growth_rate: 1.0,
        lethality: 0.5,
        production: 1.0,
        decay: 1.0,
        production_exponent: 1.0,
        logistic_exponent: 2.0,
        diffusion_exponent: 0.5,
        sensitivity_exponent: 0.25,
        tau: 1,
        source: SourceSpec::constant(0.2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn canonical_functions() {
        assert_eq!(canonical_d(0.0, 3.7), 1.0);
        assert_eq!(canonical_d(1.0, 1.0), 2.0);
        assert_eq!(canonical_d(3.0, 0.5), 2.0);
        assert_eq!(canonical_s(0.0, 2.0), 0.0);
        assert_eq!(canonical_s(1.0, 1.0), 2.0);
        assert_relative_eq!(
            canonical_s(2.0, 0.5),
            2.0 * 3f64.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn s_derivative_matches_finite_difference() {
        for &(s, beta) in &[(0.0, 0.3), (0.7, 1.2), (4.0, 0.25)] {
            let h = 1e-6;
            let fd = (canonical_s(s + h, beta) - canonical_s((s - h).max(0.0), beta))
                / (s + h - (s - h).max(0.0));
            assert_relative_eq!(canonical_s_derivative(s, beta), fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn existence_gate_examples() {
        let mut p = reference_params();
        p.diffusion_exponent = 1.0;
        p.sensitivity_exponent = 0.2;
        p.production_exponent = 0.5;
        let g = check_existence_gate(&p, 2);
        assert!(g.passed);
        assert_relative_eq!(g.margin, 1.3, epsilon = 1e-12);

        p.tau = 0;
        p.diffusion_exponent = 0.1;
        p.sensitivity_exponent = 1.0;
        p.production_exponent = 0.1;
        let g = check_existence_gate(&p, 2);
        assert!(!g.passed, "equality must fail: {g}");

        p.tau = 1;
        p.diffusion_exponent = 0.5;
        p.sensitivity_exponent = 0.5;
        p.production_exponent = 1.0;
        let g = check_existence_gate(&p, 4);
        assert!(!g.passed);
        assert_relative_eq!(g.margin, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn stability_gate_examples() {
        let mut p = reference_params();
        let eq = equilibria(&p, 0.2).unwrap();
        let star = eq.coexistence.unwrap();
        // bound computed independently: 4 * 1 * 1 * 0.5 / (1 * 0.6)
        assert_relative_eq!(star.u, 0.6, epsilon = 1e-15);
        let g = check_stability_gate(&p, &eq).unwrap();
        assert!(g.passed, "{g}");
        assert_relative_eq!(g.margin, 0.0, epsilon = 1e-15);

        p.sensitivity = 2.0;
        let g = check_stability_gate(&p, &eq).unwrap();
        assert!(!g.passed);
        assert_relative_eq!(g.margin, 2.0 / 0.6 - 4.0, epsilon = 1e-12);

        p.sensitivity = 1.0;
        p.sensitivity_exponent = 0.3;
        assert!(!check_stability_gate(&p, &eq).unwrap().passed);
    }

    #[test]
    fn stability_gate_rejects_semi_regime() {
        let mut p = reference_params();
        p.lethality = 1.0;
        let eq = equilibria(&p, 2.0).unwrap();
        assert!(matches!(
            check_stability_gate(&p, &eq),
            Err(Error::NoCoexistence)
        ));
    }

    #[test]
    fn equilibria_examples() {
        let p = reference_params();
        let eq = equilibria(&p, 0.2).unwrap();
        assert_eq!(eq.regime, Regime::Coexistence);
        let s = eq.coexistence.unwrap();
        assert_relative_eq!(s.u, 0.6, epsilon = 1e-15);
        assert_relative_eq!(s.v, 0.8, epsilon = 1e-15);
        let (r1, r2) = relation_residuals(&p, 0.2, s);
        assert!(r1 <= 1e-12 && r2 <= 1e-12);
        // The alternative formula r(a+μ)/(br+aμ) = 1.0 leaves a residual.
        let (_, bad) = relation_residuals(&p, 0.2, SteadyState { u: 0.6, v: 1.0 });
        assert!(bad > 0.1);

        let mut q = reference_params();
        q.lethality = 1.0;
        let eq = equilibria(&q, 2.0).unwrap();
        assert_eq!(eq.regime, Regime::SemiCoexistence);
        assert!(eq.coexistence.is_none());
        assert_eq!(eq.semi, SteadyState { u: 0.0, v: 2.0 });

        let eq = equilibria(&q, 0.0).unwrap();
        let s = eq.coexistence.unwrap();
        assert_relative_eq!(s.u, 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.v, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn equilibria_requires_linear_production() {
        let mut p = reference_params();
        p.production_exponent = 2.0;
        assert!(matches!(
            equilibria(&p, 0.2),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn root_path_handles_higher_kappa() {
        let mut p = reference_params();
        for kappa in [2.5, 3.0, 4.0, 7.0] {
            p.logistic_exponent = kappa;
            let s = equilibria(&p, 0.2).unwrap().coexistence.unwrap();
            assert!(s.u > 0.0 && s.u < 1.0 && s.v > 0.0);
            let (r1, r2) = relation_residuals(&p, 0.2, s);
            assert!(r1 <= 1e-12 && r2 <= 1e-12, "kappa={kappa}: {r1} {r2}");
        }
    }

    #[test]
    fn validation_messages() {
        let mut p = reference_params();
        p.logistic_exponent = 0.5;
        assert_eq!(p.validate().unwrap_err().to_string(), "kappa must exceed 1");
        let mut p = reference_params();
        p.tau = 2;
        assert_eq!(p.validate().unwrap_err().to_string(), "tau must be 0 or 1");
        let mut p = reference_params();
        p.decay = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sources_stay_within_bound() {
        let grid = Grid::new(&[2.0], &[64]).unwrap();
        let bump = SourceSpec::GaussianBump {
            amplitude: 1.5,
            center: vec![1.0],
            width: 0.3,
        };
        let periodic = SourceSpec::TimePeriodic {
            amplitude: 1.5,
            period: 3.0,
        };
        for spec in [&bump, &periodic] {
            for i in 0..grid.len() {
                for k in 0..40 {
                    let f = spec.eval(grid.center(i), 0.17 * k as f64);
                    assert!((0.0..=1.5).contains(&f));
                }
            }
        }
        assert_eq!(periodic.mean(&grid), 0.75);
        let m = bump.mean(&grid);
        assert!(m > 0.0 && m < 1.5);
    }

    proptest! {
        #[test]
        fn canonical_functions_attain_structure_bounds(s in 0.0f64..50.0, alpha in 0.01f64..3.0, beta in 0.01f64..3.0) {
            let d = canonical_d(s, alpha);
            let sv = canonical_s(s, beta);
            prop_assert!(d >= (s + 1.0).powf(alpha));
            prop_assert!(sv >= 0.0 && sv <= s * (s + 1.0).powf(beta));
        }

        #[test]
        fn existence_gate_is_monotone(alpha in 0.01f64..3.0, beta in 0.01f64..3.0, m in 0.01f64..3.0,
                                      n in 1usize..5, bump in 0.0f64..1.0, tau in 0u8..2) {
            let mut p = reference_params();
            p.tau = tau;
            p.diffusion_exponent = alpha;
            p.sensitivity_exponent = beta;
            p.production_exponent = m;
            let base = check_existence_gate(&p, n).passed;
            if base {
                let mut q = p.clone();
                q.diffusion_exponent += bump;
                prop_assert!(check_existence_gate(&q, n).passed);
                // 2/n shrinks as n grows: lowering the dimension keeps a pass.
                if n > 1 {
                    prop_assert!(check_existence_gate(&p, n - 1).passed);
                }
            } else {
                prop_assert!(!check_existence_gate(&p, n + 1).passed);
                let mut q = p.clone();
                q.sensitivity_exponent += bump;
                prop_assert!(!check_existence_gate(&q, n).passed);
                let mut q = p.clone();
                q.production_exponent += bump;
                prop_assert!(!check_existence_gate(&q, n).passed);
            }
        }

        #[test]
        fn closed_form_and_root_solve_agree(r in 0.2f64..3.0, b in 0.2f64..3.0, a in 0.2f64..3.0,
                                            mu in 0.05f64..2.0, frac in 0.0f64..0.95) {
            let mut p = reference_params();
            p.growth_rate = r;
            p.decay = b;
            p.production = a;
            p.lethality = mu;
            let fbar = frac * b * r / mu;
            let closed = coexistence_closed_form(&p, fbar);
            let root = coexistence_by_root(&p, fbar).unwrap();
            prop_assert!((closed.u - root.u).abs() <= 1e-12 * closed.u.max(1e-300));
            prop_assert!((closed.v - root.v).abs() <= 1e-12 * closed.v);
        }
    }
}
