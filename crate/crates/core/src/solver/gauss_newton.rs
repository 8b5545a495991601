//! Outer Gauss-Newton loop with Levenberg-Marquardt damping escalation.

use serde::{Deserialize, Serialize};

use super::{solve_normal_equations, GOperator, GnConfig, IncrementSolveStats, LinearOperator};
use crate::assimilation::{CostBreakdown, CovarianceFactor, LocalProblem};
use crate::error::{DdvarError, Result};

/// Damping used by the first escalation when none is configured.
const FIRST_DAMPING: f64 = 1e-4;
const MAX_ESCALATIONS: usize = 3;
/// Relative cost increases below this are rounding, not divergence.
const STAGNATION: f64 = 1e-8;

/// A regularised least-squares problem `‖x − b‖²_{B⁻¹} + Σ w_s d_s(x)²`.
pub trait LeastSquaresProblem {
    type Op<'a>: LinearOperator
    where
        Self: 'a;

    fn control_len(&self) -> usize;
    fn background(&self) -> &[f64];
    fn factor(&self) -> &CovarianceFactor;
    fn weights(&self) -> Vec<f64>;
    /// Cost, residuals and tangent-linear sampling operator about `x`.
    fn linearize(&self, x: &[f64]) -> Result<(CostBreakdown, Vec<f64>, Self::Op<'_>)>;
}

impl LeastSquaresProblem for LocalProblem {
    type Op<'a> = GOperator<'a>;

    fn control_len(&self) -> usize {
        LocalProblem::control_len(self)
    }

    fn background(&self) -> &[f64] {
        &self.background
    }

    fn factor(&self) -> &CovarianceFactor {
        &self.factor
    }

    fn weights(&self) -> Vec<f64> {
        LocalProblem::weights(self)
    }

    fn linearize(&self, x: &[f64]) -> Result<(CostBreakdown, Vec<f64>, GOperator<'_>)> {
        let traj = self.trajectory(x)?;
        let cost = self.cost_along(x, &traj)?;
        let d = self.residuals(&traj);
        Ok((cost, d, GOperator::new(self, traj.linearize())))
    }
}

/// One accepted outer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnStep {
    pub outer: usize,
    pub damping: f64,
    pub escalations: usize,
    pub cost: CostBreakdown,
    pub stats: IncrementSolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnOutcome {
    pub x: Vec<f64>,
    /// Cost at the start followed by the cost after every accepted step.
    pub costs: Vec<CostBreakdown>,
    pub steps: Vec<GnStep>,
    /// A stopping test fired before `max_outer`.
    pub converged: bool,
}

impl GnOutcome {
    pub fn outer_iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn max_inner(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.stats.iterations)
            .max()
            .unwrap_or(0)
    }

    pub fn final_cost(&self) -> CostBreakdown {
        *self.costs.last().expect("initial cost is always recorded")
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimises `problem` from `x0`.
///
/// A step that raises the cost is re-solved with damping raised tenfold
/// (from 1e-4 when undamped), at most three times. A rise within rounding
/// ends the iteration as converged; a larger persistent rise is an error.
pub fn gauss_newton<P: LeastSquaresProblem>(
    problem: &P,
    x0: Vec<f64>,
    cfg: &GnConfig,
) -> Result<GnOutcome> {
    cfg.validate()?;
    if x0.len() != problem.control_len() {
        return Err(DdvarError::Dimension(format!(
            "initial guess of length {} for a control of {}",
            x0.len(),
            problem.control_len()
        )));
    }
    let weights = problem.weights();
    let factor = problem.factor();
    let mut x = x0;
    let (mut cost, mut d, mut op) = problem.linearize(&x)?;
    let mut out = GnOutcome {
        x: Vec::new(),
        costs: vec![cost],
        steps: Vec::new(),
        converged: false,
    };

    'outer: for l in 0..cfg.max_outer {
        if cost.total == 0.0 {
            out.converged = true;
            break;
        }
        let diff: Vec<f64> = x
            .iter()
            .zip(problem.background())
            .map(|(a, b)| a - b)
            .collect();
        let w = factor.inverse_apply(&diff)?;
        let mut damping = cfg.damping;
        let mut escalations = 0;
        let (x_new, next, stats) = loop {
            let (du, _, stats) =
                solve_normal_equations(&op, factor, &weights, &d, Some(&w), damping, cfg)
                    .map_err(|e| e.context(&format!("outer iteration {l}")))?;
            let x_new: Vec<f64> = x.iter().zip(&du).map(|(a, b)| a + b).collect();
            let trial = match problem.linearize(&x_new) {
                Ok(t) => Some(t),
                Err(DdvarError::Numerical(_)) | Err(DdvarError::StepSize { .. }) => None,
                Err(e) => return Err(e),
            };
            let new_total = trial.as_ref().map_or(f64::INFINITY, |t| t.0.total);
            if new_total <= cost.total {
                break (
                    x_new,
                    trial.expect("finite cost implies a successful evaluation"),
                    stats,
                );
            }
            if new_total - cost.total <= STAGNATION * cost.total {
                out.converged = true;
                break 'outer;
            }
            if escalations == MAX_ESCALATIONS {
                return Err(DdvarError::Numerical(format!(
                    "cost rose from {:e} to {new_total:e} at outer iteration {l} after {MAX_ESCALATIONS} damping escalations",
                    cost.total
                )));
            }
            damping = if damping == 0.0 {
                FIRST_DAMPING
            } else {
                10.0 * damping
            };
            escalations += 1;
        };
        let previous = cost.total;
        (cost, d, op) = next;
        x = x_new;
        let stats = IncrementSolveStats {
            cost_before: previous,
            cost_after: cost.total,
            ..stats
        };
        out.costs.push(cost);
        out.steps.push(GnStep {
            outer: l,
            damping,
            escalations,
            cost,
            stats,
        });
        let decrease = (previous - cost.total) / previous;
        if decrease < cfg.outer_tol || stats.step_norm < cfg.outer_tol * (1.0 + inf_norm(&x)) {
            out.converged = true;
            break;
        }
    }
    out.x = x;
    Ok(out)
}
