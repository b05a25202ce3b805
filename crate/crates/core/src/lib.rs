//! Quasilinear wave-particle kinetics on a bundled plasmon phase space.

// `!(x > y)` is how NaN-rejecting comparisons are written throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod bundles;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod hamiltonian;
pub mod interaction;
pub mod io;
pub mod ldg;
pub mod mesh;
pub mod polygon;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision simulation.
pub type Simulation64 = driver::Simulation<f64>;
/// Single-precision simulation.
pub type Simulation32 = driver::Simulation<f32>;
pub type Solver64 = solver::Solver<f64>;
pub type Solver32 = solver::Solver<f32>;
pub type TriMesh64 = mesh::TriMesh<f64>;
pub type TriMesh32 = mesh::TriMesh<f32>;
