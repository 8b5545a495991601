//! Incremental Gauss-Newton with conjugate-gradient inner solves.
//!
//! Each outer step linearises the sampled model about the current control,
//! then solves the normal equations in the preconditioned variable
//! `w = V⁻¹(x − b)`:
//!
//! ```text
//! (I + (GV)ᵀ W (GV) + δ I) Δw = (GV)ᵀ W d − w
//! ```
//!
//! `W` holds the per-sample weights (observations and overlap targets) and
//! `d` the residuals. The `− w` term is the background gradient; it vanishes
//! on the first step from the background.

mod cg;
mod gauss_newton;

use serde::{Deserialize, Serialize};

use crate::assimilation::LocalProblem;
use crate::error::{DdvarError, Result};
use crate::swe::Linearization;

pub use cg::{solve_normal_equations, IncrementSolveStats};
pub use gauss_newton::{gauss_newton, GnOutcome, GnStep, LeastSquaresProblem};

/// Matrix-free linear map with its transpose.
pub trait LinearOperator {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64>;
}

/// `G`: control increment to the stacked tangent-linear samples of every
/// observed level, `G = [H⁰; H¹M^{0,1}; …]`.
pub struct GOperator<'a> {
    problem: &'a LocalProblem,
    lin: Linearization,
}

impl<'a> GOperator<'a> {
    pub fn new(problem: &'a LocalProblem, lin: Linearization) -> Self {
        GOperator { problem, lin }
    }
}

impl LinearOperator for GOperator<'_> {
    fn input_len(&self) -> usize {
        self.problem.control_len()
    }

    fn output_len(&self) -> usize {
        self.problem.samples.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.problem.sample_tlm(&self.lin, x)
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.problem.sample_adj(&self.lin, y)
    }
}

/// `G du`.
pub fn g_apply(gop: &impl LinearOperator, du: &[f64]) -> Vec<f64> {
    gop.apply(du)
}

/// `Gᵀ dy`.
pub fn g_transpose_apply(gop: &impl LinearOperator, dy: &[f64]) -> Vec<f64> {
    gop.apply_transpose(dy)
}

/// Dense row-major matrix as a [`LinearOperator`]; used for oracles and
/// linear test problems.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl LinearOperator for DenseOperator {
    fn input_len(&self) -> usize {
        self.cols
    }

    fn output_len(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (o, a) in out
                .iter_mut()
                .zip(&self.data[r * self.cols..(r + 1) * self.cols])
            {
                *o += a * yr;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeEvery {
    /// Local solves run to convergence between exchanges.
    #[default]
    OuterRound,
    /// One Gauss-Newton step per subdomain between exchanges.
    EveryGnIteration,
}

/// Gauss-Newton and inner-solver controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnConfig {
    pub max_outer: usize,
    pub outer_tol: f64,
    pub max_inner: usize,
    pub inner_tol: f64,
    /// 0 for pure Gauss-Newton, positive for Levenberg-Marquardt.
    pub damping: f64,
}

impl Default for GnConfig {
    fn default() -> Self {
        GnConfig {
            max_outer: 10,
            outer_tol: 1e-8,
            max_inner: 200,
            inner_tol: 1e-10,
            damping: 0.0,
        }
    }
}

impl GnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0 {
            return Err(DdvarError::config("solver.max_outer", "must be at least 1"));
        }
        if self.max_inner == 0 {
            return Err(DdvarError::config("solver.max_inner", "must be at least 1"));
        }
        for (key, v) in [
            ("solver.outer_tol", self.outer_tol),
            ("solver.inner_tol", self.inner_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DdvarError::config(
                    key,
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(DdvarError::config(
                "solver.damping",
                format!("must be nonnegative, got {}", self.damping),
            ));
        }
        Ok(())
    }
}
