//! Numerical laboratory for distance-constrained optimal spectral partitions
//! on gridded domains.
//!
//! * [`grid`]: masked lattices, exact distance transforms, discrete norms.
//! * [`eigensolve`]: masked Dirichlet ground states and 1-D reference solvers.
//! * [`monotonicity`]: mean-value, one-phase ACF and two-phase CJK diagnostics.
//! * [`partition`]: the alternating optimizer, cutoff competitors, r-sweeps.
//! * [`cli`]: JSON-configured experiment driver behind the `segpart` binary.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod eigensolve;
pub mod error;
pub mod grid;
pub mod io;
pub mod monotonicity;
pub mod partition;
pub mod stats;

pub use error::{Result, SegError};
pub use grid::{build_domain, GridDomain, Mask, ScalarField, Shape};
