//! Space-time domain-decomposed 4D-Var data assimilation on the shallow
//! water equations.
//!
//! The crate is organised bottom-up:
//!
//! * [`spacetime`]: grid, overlapping decomposition, restriction/extension.
//! * [`swe`]: shallow water model with tangent-linear and adjoint.
//! * [`assimilation`]: observations, covariances, cost functionals.
//! * [`solver`]: Gauss-Newton with conjugate-gradient inner solves.
//! * [`orchestrator`]: the domain-decomposition driver and global oracle.
//! * [`perfmodel`]: scale-up, surface-to-volume and memory models.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assimilation;
pub mod error;
pub mod orchestrator;
pub mod perfmodel;
pub mod rng;
pub mod solver;
pub mod spacetime;
pub mod swe;

pub use error::{DdvarError, Result};
