//! Numerical laboratory for Hall conductance quantization of
//! charge-conserving lattice systems on a torus.
//!
//! The pipeline builds flux-twisted Hamiltonians, evolves ground states
//! quasi-adiabatically around flux loops, decomposes large loops into small
//! ones, and compares loop phases against Kubo curvature and Chern numbers.

pub mod conductance;
pub mod diagnostics;
pub mod error;
pub mod fock;
pub mod hamiltonian;
pub mod lattice;
pub mod linalg;
pub mod loops;
pub mod models;
pub mod quasiadiabatic;
pub mod spectral;

pub use error::{HallError, Result};
