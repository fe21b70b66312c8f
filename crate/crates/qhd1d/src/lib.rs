//! One-dimensional full viscous quantum hydrodynamic-Poisson laboratory.
//!
//! The crate implements, solves and empirically verifies the scaled 1-D
//! system for particle density n, current density J, energy density E and
//! electric potential V on [0, 1]:
//!
//! ```text
//! n_t + J_x - nu (n - rho)_xx = 0
//! J_t + J/tau - nu J_xx + (2/3)(J^2/n)_x + (2/3)E_x - B(n) - n V_x + mu n_x = 0
//! E_t + (5/3)(J E/n)_x + (2/tau)(E - (3/2)n) - nu E_xx - (1/3)(J^3/n^2)_x
//!     - (eps^2/18)(J n_xx/n - J n_x^2/n^2)_x - J V_x + mu J_x = 0
//! lambda^2 V_xx = n - rho(x)
//! ```
//!
//! with the quantum Bohm dispersion B(n) = (eps^2/9) n ((sqrt n)_xx / sqrt n)_x
//! and a prescribed doping profile rho. Three pillars:
//!
//! * [`steady`] computes the steady state around (rho, J_b, 3/2 rho) by the
//!   contraction map on the linearized banded system, with a theta-homotopy
//!   fallback, and measures the delta0-scaling of the construction.
//! * [`transient`] integrates the perturbation system around the steady state
//!   with a first-order IMEX scheme and an optional fourth-order sigma
//!   regularization, tracks energy functionals, and fits decay rates.
//! * [`analysis`] checks the closed-form sufficient conditions, evaluates the
//!   composite stability norm, and sweeps parameter space.
//!
//! The `cli` module exposes the subcommand front end used by the thin
//! `qhd1d` binary; `selftest` hosts the verification suite behind the
//! `selftest` subcommand.

pub mod analysis;
pub mod band;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod model;
pub mod report;
pub mod selftest;
pub mod steady;
pub mod transient;

pub use error::{QhdError, Result};
pub use grid::{diff, sobolev_norm, solve_poisson, trapezoid, Field, Grid};
pub use model::{DopingProfile, ModelParams};
