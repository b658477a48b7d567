//! Data-driven reduced order models of the acoustic wave operator, and
//! velocity estimation by ROM misfit minimization.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] – grids, velocity fields, Gaussian-bump search spaces and the
//!   built-in experiment models.
//! * [`forward`] – the symmetrized operator `A = -c Δ (c ·)`, operator
//!   functions of `A`, snapshot propagation, and synthesis of the sampled
//!   data matrices `D_j`, `D̈_j` (both spectrally and by time stepping).
//! * [`rom`] – mass/stiffness assembly from data, block Cholesky, and the
//!   projected operator `A_rom = R^{-T} S R^{-1}`.
//! * [`objective`] – ROM misfit and conventional data misfit.
//! * [`inversion`] – layer-stripping regularized Gauss–Newton.
//! * [`experiment`] – config-driven runners used by the CLI.
//!
//! Data-parallel loops (per source, per Jacobian column, per sweep point) go
//! through [`exec`]; disabling the `parallel` feature compiles them as plain
//! sequential loops.

pub mod error;
pub mod exec;
pub mod experiment;
pub mod forward;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod rom;

pub use error::{Error, ErrorKind, Result};
pub use exec::Parallelism;
