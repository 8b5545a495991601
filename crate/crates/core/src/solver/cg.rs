//! Conjugate gradients on the preconditioned normal equations.

use serde::{Deserialize, Serialize};

use super::{GnConfig, LinearOperator};
use crate::assimilation::CovarianceFactor;
use crate::error::{DdvarError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IncrementSolveStats {
    pub iterations: usize,
    /// `‖r‖ / ‖rhs‖` at exit (0 for a zero right-hand side).
    pub relative_residual: f64,
    /// False when the iteration limit was hit before `inner_tol`.
    pub converged: bool,
    pub cost_before: f64,
    pub cost_after: f64,
    /// `‖Δu‖∞`.
    pub step_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(I + (GV)ᵀ W (GV) + damping I) Δw = (GV)ᵀ W d − w_offset` and
/// returns `(Δu = V Δw, Δw, stats)`. `w_offset` is `V⁻¹(x − b)` at the
/// linearisation point; `None` means zero.
pub fn solve_normal_equations(
    gop: &impl LinearOperator,
    factor: &CovarianceFactor,
    weights: &[f64],
    d: &[f64],
    w_offset: Option<&[f64]>,
    damping: f64,
    cfg: &GnConfig,
) -> Result<(Vec<f64>, Vec<f64>, IncrementSolveStats)> {
    let n = gop.input_len();
    if d.len() != gop.output_len() || weights.len() != d.len() || factor.len() != n {
        return Err(DdvarError::Dimension(format!(
            "normal equations: control {n}, factor {}, residual {}, weights {}, operator rows {}",
            factor.len(),
            d.len(),
            weights.len(),
            gop.output_len()
        )));
    }
    let wd: Vec<f64> = d.iter().zip(weights).map(|(a, w)| a * w).collect();
    let mut rhs = factor.apply_transpose(&gop.apply_transpose(&wd))?;
    if let Some(w) = w_offset {
        rhs.iter_mut().zip(w).for_each(|(r, w)| *r -= w);
    }
    let op = |p: &[f64]| -> Result<Vec<f64>> {
        let gp = gop.apply(&factor.apply(p)?);
        let wgp: Vec<f64> = gp.iter().zip(weights).map(|(a, w)| a * w).collect();
        let back = factor.apply_transpose(&gop.apply_transpose(&wgp))?;
        Ok(p.iter()
            .zip(back)
            .map(|(a, b)| (1.0 + damping) * a + b)
            .collect())
    };

    let rhs_norm = dot(&rhs, &rhs).sqrt();
    let mut stats = IncrementSolveStats {
        converged: true,
        ..Default::default()
    };
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok((x.clone(), x, stats));
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = cfg.inner_tol * rhs_norm;
    stats.converged = false;
    for it in 1..=cfg.max_inner {
        let ap = op(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(DdvarError::Numerical(format!(
                "normal-equations operator is not positive definite: <p, Ap> = {pap:e} at inner iteration {it}"
            )));
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        stats.iterations = it;
        stats.relative_residual = rr_new.sqrt() / rhs_norm;
        if rr_new.sqrt() <= target {
            stats.converged = true;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    let du = factor.apply(&x)?;
    stats.step_norm = du.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((du, x, stats))
}
