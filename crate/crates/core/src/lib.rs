//! Numerical tools for studying how detection frequencies build up toward a
//! Born density.
//!
//! * [`quadrature`]: adaptive Gauss–Kronrod integration and raw moments.
//! * [`density`]: the two-slit Fraunhofer intensity and other detector densities.
//! * [`bound`]: both sides of the one-dimensional Berry–Esseen comparison.
//! * [`sampler`]: seeded detection events and discrete observer frequencies.
//! * [`madelung`]: split-step evolution, polar decomposition, Hamilton–Jacobi
//!   and continuity residuals, quantum potential, and trajectory ensembles.
//! * [`harness`]: the replication grid, convergence sweeps and report I/O.

pub mod bound;
pub mod density;
pub mod error;
pub mod harness;
pub mod madelung;
pub mod quadrature;
pub mod sampler;

pub use error::{Error, Result};
