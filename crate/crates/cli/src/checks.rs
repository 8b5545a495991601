//! Verification suite behind `ddvar validate`: adjoint dot-product test,
//! tangent-linear Taylor test, partition of unity and the dense
//! normal-equations oracle.

use std::fmt::Write;

use ddvar_core::assimilation::{truth_initial_state, AssimilationSetup, LocalProblem, TruthSpec};
use ddvar_core::rng::substream;
use ddvar_core::solver::{solve_normal_equations, GOperator, GnConfig, LinearOperator};
use ddvar_core::spacetime::{
    build_decomposition, reconstruct, restrict, DecompositionSpec, RestrictMode, SpaceTimeField,
    SpaceTimeGrid,
};
use ddvar_core::swe::{propagate, SweParams};
use ddvar_core::{DdvarError, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

/// Named random stream for the suite's test vectors.
const VALIDATION_STREAM: &str = "validation";

/// Deliberate defects used to confirm that the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negate the adjoint output.
    AdjointSign,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub metric: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
    /// Per-case rows as CSV, header included.
    #[serde(skip)]
    pub csv: String,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `|⟨dy, M dx⟩ − ⟨Mᵀ dy, dx⟩| / (‖dx‖ ‖dy‖)` over the whole window for
/// `pairs` random pairs.
pub fn adjoint_check(
    grid: &SpaceTimeGrid,
    params: &SweParams,
    truth: &TruthSpec,
    pairs: usize,
    tol: f64,
    seed: u64,
    fault: Fault,
) -> Result<CheckOutcome> {
    let z0 = truth_initial_state(grid, params, truth);
    let last = grid.nt - 1;
    let lin = propagate(&z0, params, grid, last)?.linearize();
    let n = grid.state_len();
    let mut rng = substream(seed, VALIDATION_STREAM);
    let mut csv = String::from("pair,tlm_inner,adjoint_inner,relative_mismatch\n");
    let mut worst = 0.0f64;
    for k in 0..pairs {
        let dx: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = dot(&dy, &lin.tlm(0, last, &dx));
        let mut adj = lin.adj(0, last, &dy);
        if fault == Fault::AdjointSign {
            adj.iter_mut().for_each(|v| *v = -*v);
        }
        let rhs = dot(&adj, &dx);
        let rel = (lhs - rhs).abs() / (norm(&dx) * norm(&dy));
        worst = worst.max(rel);
        let _ = writeln!(csv, "{k},{lhs:e},{rhs:e},{rel:e}");
    }
    Ok(CheckOutcome {
        name: "adjoint",
        metric: "max_relative_mismatch",
        value: worst,
        tolerance: tol,
        passed: worst <= tol,
        detail: format!(
            "{pairs} pairs over {} steps on {}x{}",
            last, grid.nlon, grid.nlat
        ),
        csv,
    })
}

/// Least-squares slope of `ln err` against `ln eps`.
pub fn fitted_order(eps: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Centred difference quotient of the forward model against the
/// tangent-linear model; the error should decay at second order.
pub fn taylor_check(
    grid: &SpaceTimeGrid,
    params: &SweParams,
    truth: &TruthSpec,
    eps: &[f64],
    min_order: f64,
    seed: u64,
) -> Result<CheckOutcome> {
    let z = truth_initial_state(grid, params, truth);
    let last = grid.nt - 1;
    let np = grid.points();
    // Direction with 1000 m/s winds and 10 km height, so eps = 1e-2 is a
    // 10 m/s, 100 m perturbation and the smallest steps stay above roundoff.
    let mut rng = substream(seed, VALIDATION_STREAM);
    let d: Vec<f64> = (0..3 * np)
        .map(|k| rng.random_range(-1.0..1.0) * if k < 2 * np { 1000.0 } else { 10000.0 })
        .collect();
    let base = propagate(&z, params, grid, last)?;
    let lin = base.linearize().tlm(0, last, &d);
    let run = |s: f64| -> Result<Vec<f64>> {
        let mut zz = z.clone();
        zz.data.iter_mut().zip(&d).for_each(|(a, b)| *a += s * b);
        Ok(propagate(&zz, params, grid, last)?.last().data.clone())
    };
    let mut csv = String::from("eps,centred_error\n");
    let mut errs = Vec::with_capacity(eps.len());
    for &e in eps {
        let (p, m) = (run(e)?, run(-e)?);
        let r: Vec<f64> = (0..p.len())
            .map(|k| (p[k] - m[k]) / (2.0 * e) - lin[k])
            .collect();
        let err = norm(&r);
        let _ = writeln!(csv, "{e:e},{err:e}");
        errs.push(err);
    }
    let order = fitted_order(eps, &errs);
    Ok(CheckOutcome {
        name: "taylor",
        metric: "observed_order",
        value: order,
        tolerance: min_order,
        passed: order >= min_order,
        detail: format!("centred differences over {} step sizes", eps.len()),
        csv,
    })
}

/// Decomposition shapes that fit `grid`, covering time, longitude
/// (including splits across the periodic seam), latitude and mixed splits.
pub fn partition_shapes(grid: &SpaceTimeGrid) -> Vec<DecompositionSpec> {
    let s = |q, p1, p2, o_x, o_y, o_t| DecompositionSpec {
        q,
        p1,
        p2,
        o_x,
        o_y,
        o_t,
    };
    let candidates = [
        s(1, 1, 1, 0, 0, 0),
        s(2, 1, 1, 0, 0, 1),
        s(1, 2, 1, 1, 0, 0),
        s(1, 3, 1, 1, 0, 0),
        s(1, 1, 2, 0, 1, 0),
        s(2, 2, 1, 1, 0, 1),
        s(1, 2, 2, 1, 1, 0),
        s(2, 2, 2, 1, 1, 1),
        s(1, 3, 3, 1, 1, 0),
    ];
    candidates
        .into_iter()
        .filter(|c| build_decomposition(grid, c).is_ok())
        .collect()
}

/// `reconstruct(restrict_all(f)) == f` element-wise for random fields.
pub fn partition_check(
    grid: &SpaceTimeGrid,
    shapes: &[DecompositionSpec],
    fields: usize,
    seed: u64,
) -> Result<CheckOutcome> {
    if shapes.is_empty() {
        return Err(DdvarError::config(
            "decomposition",
            "no decomposition shape fits the grid",
        ));
    }
    let mut rng = substream(seed, VALIDATION_STREAM);
    let mut csv = String::from("shape,q,p1,p2,o_x,o_y,o_t,field,mismatched_values\n");
    let mut bad = 0usize;
    for (si, spec) in shapes.iter().enumerate() {
        let dec = build_decomposition(grid, spec)?;
        for k in 0..fields {
            let mut f = SpaceTimeField::zeros(grid);
            f.data
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-1e3..1e3));
            let locals: Vec<_> = dec
                .subdomains
                .iter()
                .map(|s| restrict(&f, s, RestrictMode::Plain))
                .collect();
            let back = reconstruct(&locals, &dec)?;
            let miss = back
                .data
                .iter()
                .zip(&f.data)
                .filter(|(a, b)| a.to_bits() != b.to_bits())
                .count();
            bad += miss;
            let _ = writeln!(
                csv,
                "{si},{},{},{},{},{},{},{k},{miss}",
                spec.q, spec.p1, spec.p2, spec.o_x, spec.o_y, spec.o_t
            );
        }
    }
    Ok(CheckOutcome {
        name: "partition_of_unity",
        metric: "mismatched_values",
        value: bad as f64,
        tolerance: 0.0,
        passed: bad == 0,
        detail: format!("{fields} fields on each of {} shapes", shapes.len()),
        csv,
    })
}

fn columns(n: usize, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<DMatrix<f64>> {
    let mut cols = Vec::with_capacity(n);
    let mut e = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        cols.push(DVector::from_vec(f(&e)?));
        e[k] = 0.0;
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Largest control size assembled densely.
pub const ORACLE_MAX_CONTROL: usize = 1200;

/// First Gauss-Newton increment from the matrix-free preconditioned solve
/// against a dense direct solve of `(B⁻¹ + GᵀWG) δu = GᵀW d`, taken in the
/// equivalent form `(I + BGᵀWG) δu = BGᵀW d`.
pub fn dense_oracle_check(setup: &AssimilationSetup, tol: f64) -> Result<CheckOutcome> {
    let p = LocalProblem::global(setup)?;
    let n = p.control_len();
    if n > ORACLE_MAX_CONTROL {
        return Err(DdvarError::config(
            "grid.n",
            format!("dense oracle needs at most {ORACLE_MAX_CONTROL} control values, got {n}"),
        ));
    }
    let traj = p.trajectory(&p.background)?;
    let d = p.residuals(&traj);
    let weights = p.weights();
    let gop = GOperator::new(&p, traj.linearize());

    let g = columns(n, |e| Ok(gop.apply(e)))?;
    let b = columns(n, |e| p.factor.b_apply(e))?;
    // Premultiplied by B: a correlated B on a small periodic grid is too
    // ill-conditioned to invert explicitly.
    let w = DMatrix::from_diagonal(&DVector::from_vec(weights.clone()));
    let gtw = g.transpose() * &w;
    let lhs = DMatrix::identity(n, n) + &b * &gtw * &g;
    let rhs = &b * gtw * DVector::from_vec(d.clone());
    let expected = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| DdvarError::Numerical("dense normal matrix is singular".into()))?;

    let cfg = GnConfig {
        max_inner: 4 * n,
        inner_tol: 1e-14,
        ..Default::default()
    };
    let (du, _, stats) = solve_normal_equations(&gop, &p.factor, &weights, &d, None, 0.0, &cfg)?;
    let err = (DVector::from_vec(du) - &expected).norm() / expected.norm().max(f64::MIN_POSITIVE);
    let csv = format!(
        "control_len,observations,cg_iterations,relative_residual,relative_error\n{n},{},{},{:e},{err:e}\n",
        d.len(),
        stats.iterations,
        stats.relative_residual
    );
    Ok(CheckOutcome {
        name: "dense_oracle",
        metric: "relative_error",
        value: err,
        tolerance: tol,
        passed: err <= tol,
        detail: format!(
            "{n} controls, {} samples, {} CG iterations",
            d.len(),
            stats.iterations
        ),
        csv,
    })
}

/// Summary table of a suite run.
pub fn summary_csv(outcomes: &[CheckOutcome]) -> String {
    let mut out = String::from("check,metric,value,tolerance,passed\n");
    for o in outcomes {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{}",
            o.name, o.metric, o.value, o.tolerance, o.passed
        );
    }
    out
}
