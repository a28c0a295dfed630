//! Particle system, semi-discrete reaction-diffusion system and one-phase
//! Stefan problem for two competing species on the discrete torus.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: torus geometry, discrete gradient/Laplacian, field I/O.
//! * [`zrmeasure`]: zero-range jump rates, partition function, the
//!   fugacity map `phi`, incompressibilities and exact site samplers.
//! * [`simulator`]: event-driven simulation of the zero-range + Kawasaki +
//!   killing Markov chain.
//! * [`observables`]: empirical pairings, block averages, rescaled fields
//!   and replica statistics.
//! * [`pde`]: the semi-discrete system `u' = Δφ(u) - Kuv`, `v' = εΔv - Kuv`
//!   and executable a priori estimates.
//! * [`stefan`]: backward-Euler solver for `w' = Δ D_φ(w)` and the weak-form
//!   residual checker.
//! * [`harness`]: experiment plans, sweeps, persistence and the acceptance
//!   criteria.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod lattice;
pub mod linsolve;
pub mod observables;
pub mod pde;
pub mod rng;
pub mod simulator;
pub mod stefan;
pub mod zrmeasure;

pub use error::{Error, Result};
pub use lattice::{LatticeField, TorusGrid};
pub use zrmeasure::{JumpRateSpec, RateKind, ThermoTable};
