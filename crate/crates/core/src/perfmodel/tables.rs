use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::memory::{matrix_free_footprint, MemoryFit, REFERENCE_MEMORY_MB};
use super::{
    alpha_measured, alpha_poly, measured_scaleup, surface_to_volume, theoretical_scaleup,
    ComplexityPoly,
};
use crate::error::{DdvarError, Result};
use crate::spacetime::NVARS;

/// Accelerator-over-CPU speedup of the local minimisation, `(n_loc, s_loc)`.
pub const REFERENCE_GPU_SPEEDUP: [(usize, f64); 8] = [
    (32, 15.3),
    (40, 17.5),
    (48, 18.08),
    (56, 19.0),
    (64, 19.8),
    (72, 20.2),
    (80, 22.5),
    (88, 20.54),
];

/// Weak scaling of one iteration at `n_loc = 32`: `(QP, problem size, Sc_meas)`.
pub const REFERENCE_WEAK_SCALING: [(usize, f64, f64); 6] = [
    (2, 6.1e3, 3.3),
    (4, 1.2e4, 15.4),
    (8, 2.4e4, 54.1),
    (16, 4.9e4, 123.0),
    (32, 9.8e4, 230.0),
    (64, 1.9e5, 320.0),
];

/// Local grid width behind [`REFERENCE_WEAK_SCALING`].
pub const WEAK_SCALING_N_LOC: usize = 32;

/// Synthetic timings: `T_flop(x) = t_op · P(x)` and a halo overhead of
/// `t_comm` seconds per surface value, `T_oh = t_comm · 2 (D_t + D_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeledCosts {
    pub poly: ComplexityPoly,
    pub t_op: f64,
    pub t_comm: f64,
    /// `ρ^G / ρ^DD`.
    pub rho_ratio: f64,
}

impl Default for ModeledCosts {
    fn default() -> Self {
        ModeledCosts {
            poly: ComplexityPoly::default(),
            t_op: 1e-9,
            t_comm: 1e-6,
            rho_ratio: 1.0,
        }
    }
}

impl ModeledCosts {
    pub fn validate(&self) -> Result<()> {
        self.poly.validate()?;
        for (k, v) in [("t_op", self.t_op), ("rho_ratio", self.rho_ratio)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DdvarError::config(
                    format!("perf.{k}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.t_comm.is_finite() && self.t_comm >= 0.0) {
            return Err(DdvarError::config("perf.t_comm", "must be non-negative"));
        }
        Ok(())
    }

    pub fn t_flop(&self, size: f64) -> f64 {
        self.t_op * self.poly.eval(size)
    }

    pub fn t_oh(&self, d_t: usize, d_s: usize) -> f64 {
        self.t_comm * 2.0 * (d_t + d_s) as f64
    }

    /// One modeled point for a `q × p` split with local sizes `d_t × d_s`.
    pub fn row(&self, q: usize, p: usize, d_t: usize, d_s: usize) -> Result<SweepRow> {
        let qp = q * p;
        let n_loc = d_t * d_s;
        let n = qp * n_loc;
        let sv = surface_to_volume(d_t, d_s)?;
        let t_flop_global = self.t_flop(n as f64);
        let t_flop_loc = self.t_flop(n_loc as f64);
        let t_oh = self.t_oh(d_t, d_s);
        let measured = measured_scaleup(t_flop_global, t_flop_loc, t_oh, qp as f64, false);
        Ok(SweepRow {
            qp,
            q,
            p,
            d_t,
            d_s,
            n_loc,
            n,
            sv,
            alpha: alpha_poly(&self.poly, n_loc as f64, qp as f64),
            theoretical: theoretical_scaleup(
                self.rho_ratio,
                1.0,
                n_loc as f64,
                qp as f64,
                &self.poly,
            ),
            t_flop_global,
            t_flop_loc,
            t_oh,
            measured,
            efficiency: measured / qp as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub qp: usize,
    pub q: usize,
    pub p: usize,
    pub d_t: usize,
    pub d_s: usize,
    pub n_loc: usize,
    pub n: usize,
    pub sv: f64,
    pub alpha: f64,
    pub theoretical: f64,
    pub t_flop_global: f64,
    pub t_flop_loc: f64,
    pub t_oh: f64,
    pub measured: f64,
    pub efficiency: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "qp,q,p,d_t_points,d_s_points,n_loc_points,n_points,sv_ratio,alpha,sc_theoretical,t_flop_global_s,t_flop_loc_s,t_oh_s,sc_measured,efficiency";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.qp,
            self.q,
            self.p,
            self.d_t,
            self.d_s,
            self.n_loc,
            self.n,
            self.sv,
            self.alpha,
            self.theoretical,
            self.t_flop_global,
            self.t_flop_loc,
            self.t_oh,
            self.measured,
            self.efficiency
        )
    }

    pub fn table_csv(rows: &[SweepRow]) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in rows {
            out.push_str(&r.csv());
            out.push('\n');
        }
        out
    }
}

/// Fixed global size `m_levels × k_points`, split `q × p` ways.
pub fn strong_sweep(
    costs: &ModeledCosts,
    m_levels: usize,
    k_points: usize,
    splits: &[(usize, usize)],
) -> Result<Vec<SweepRow>> {
    costs.validate()?;
    splits
        .iter()
        .map(|&(q, p)| {
            if q == 0 || p == 0 || !m_levels.is_multiple_of(q) || !k_points.is_multiple_of(p) {
                return Err(DdvarError::config(
                    "perf.splits",
                    format!("({q}, {p}) does not divide {m_levels} levels × {k_points} points"),
                ));
            }
            costs.row(q, p, m_levels / q, k_points / p)
        })
        .collect()
}

/// Fixed `q × p` split over growing local sizes `(d_t, d_s)`.
pub fn weak_sweep(
    costs: &ModeledCosts,
    q: usize,
    p: usize,
    local_sizes: &[(usize, usize)],
) -> Result<Vec<SweepRow>> {
    costs.validate()?;
    if q == 0 || p == 0 {
        return Err(DdvarError::config(
            "perf.splits",
            "q and p must be positive",
        ));
    }
    local_sizes
        .iter()
        .map(|&(d_t, d_s)| costs.row(q, p, d_t, d_s))
        .collect()
}

/// Reference memory table next to the fitted models and this crate's own
/// footprint for `levels` time levels.
pub fn memory_table_csv(levels: usize) -> String {
    let fit = MemoryFit::reference();
    let mut out = String::from(
        "n_loc_points,reference_MB,model_MB,relative_error,quartic_only_MB,matrix_free_MB\n",
    );
    for &(n, mb) in &REFERENCE_MEMORY_MB {
        let model = fit.megabytes(n);
        let _ = writeln!(
            out,
            "{n},{mb},{model},{},{},{}",
            (model - mb) / mb,
            fit.quartic_megabytes(n),
            matrix_free_footprint(n, levels) / 1e6
        );
    }
    out
}

/// Reference accelerator speedups with the resulting `α` for subdomains of
/// `d_t` levels over `3 n_loc²` spatial values.
pub fn speedup_table_csv(d_t: usize) -> Result<String> {
    let mut out = String::from("n_loc_points,s_loc_ratio,sv_ratio,alpha_measured,in_model\n");
    for &(n, s) in &REFERENCE_GPU_SPEEDUP {
        let sv = surface_to_volume(d_t, NVARS * n * n)?;
        let a = alpha_measured(s, sv);
        let _ = writeln!(out, "{n},{s},{sv},{},{}", a.value, a.in_model);
    }
    Ok(out)
}

/// Reference weak-scaling rows next to the modeled values for the same
/// `QP` at `n_loc = 32` with `d_t` local levels.
pub fn weak_scaling_csv(costs: &ModeledCosts, d_t: usize) -> Result<String> {
    costs.validate()?;
    let d_s = NVARS * WEAK_SCALING_N_LOC * WEAK_SCALING_N_LOC;
    let mut out =
        String::from("qp,reference_problem_size_points,reference_sc_measured,model_spatial_size_points,sv_ratio,alpha,sc_theoretical,sc_measured\n");
    for &(qp, size, sc) in &REFERENCE_WEAK_SCALING {
        let r = costs.row(qp, 1, d_t, d_s)?;
        let _ = writeln!(
            out,
            "{qp},{size},{sc},{},{},{},{},{}",
            qp * d_s,
            r.sv,
            r.alpha,
            r.theoretical,
            r.measured
        );
    }
    Ok(out)
}
