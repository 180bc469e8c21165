//! Finite-volume simulator and verification harness for a chemorepulsion
//! system with lethal interaction, nonlinear diffusion and nonlinear
//! production:
//!
//! ```text
//! u_t   = d1 ∇·(D(u)∇u) + χ ∇·(S(u)∇v) + r u (1 - u^(κ-1)) - μ u v
//! τ v_t = d2 Δv + a u^m - b v + f(x, t)
//! ```
//!
//! on a box with zero-flux boundaries, for the fully parabolic (`τ = 1`)
//! and parabolic-elliptic (`τ = 0`) variants.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: parameters, the canonical `D`/`S` families, sources,
//!   boundedness/stability gates and homogeneous steady states.
//! * [`discretization`]: cell-centred grids and conservative operators.
//! * [`solver`]: time stepping (explicit Heun for `u`, implicit `v`) and the
//!   elliptic chemical solve.
//! * [`diagnostics`]: mass, norms, Lyapunov energies and decay-rate fits.
//! * [`experiments`]: parameter sweeps and outcome classification.
//! * [`cli`]: configuration files, run orchestration and CSV output.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod experiments;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
