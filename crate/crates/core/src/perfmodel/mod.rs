//! Analytical performance model: scale-up, surface-to-volume ratio,
//! measured scale-up with a local accelerator speedup, and per-subdomain
//! memory estimates.
//!
//! The cost of one local solve is modeled as a polynomial `P(x) = Σ a_k x^k`
//! in the problem size. Writing `P̃(x) = P(x) / x^d`, the scale-up of the
//! decomposed algorithm over `QP` subdomains of size `N_loc` satisfies
//!
//! ```text
//! Sc ≥ (ρ^G / ρ^DD) · α(N_loc, QP) · QP^(d−1),   α = P̃(QP·N_loc) / P̃(N_loc)
//! ```
//!
//! so `α = 1` exactly for a monomial cost and `α → 1` as `N_loc` grows.

mod memory;
mod tables;

use serde::{Deserialize, Serialize};

use crate::error::{DdvarError, Result};
use crate::orchestrator::AnalysisReport;
use crate::spacetime::Subdomain;

pub use memory::{matrix_free_footprint, memory_estimate, MemoryFit, REFERENCE_MEMORY_MB};
pub use tables::{
    memory_table_csv, speedup_table_csv, strong_sweep, weak_scaling_csv, weak_sweep, ModeledCosts,
    SweepRow, REFERENCE_GPU_SPEEDUP, REFERENCE_WEAK_SCALING, WEAK_SCALING_N_LOC,
};

/// Coefficients `a_0..a_d` of the local cost polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityPoly {
    pub coefficients: Vec<f64>,
}

impl Default for ComplexityPoly {
    /// `x²`: the tangent-linear cost grows with the square of the size.
    fn default() -> Self {
        ComplexityPoly {
            coefficients: vec![0.0, 0.0, 1.0],
        }
    }
}

impl ComplexityPoly {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        let p = ComplexityPoly { coefficients };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let key = "perf.coefficients";
        match self.coefficients.last() {
            None => Err(DdvarError::config(key, "needs at least one coefficient")),
            Some(0.0) => Err(DdvarError::config(
                key,
                "leading coefficient must be nonzero",
            )),
            _ if self.coefficients.iter().any(|a| !a.is_finite() || *a < 0.0) => Err(
                DdvarError::config(key, "coefficients must be finite and non-negative"),
            ),
            _ => Ok(()),
        }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, a| acc * x + a)
    }

    /// `P(x) / x^d`, evaluated in powers of `1/x` to stay accurate for large `x`.
    pub fn normalized(&self, x: f64) -> f64 {
        let inv = 1.0 / x;
        self.coefficients.iter().fold(0.0, |acc, a| acc * inv + a)
    }

    pub fn is_monomial(&self) -> bool {
        self.coefficients[..self.degree()].iter().all(|a| *a == 0.0)
    }
}

/// Lower-order correction `α(N_loc, QP)` of the scale-up bound.
pub fn alpha_poly(poly: &ComplexityPoly, n_loc: f64, qp: f64) -> f64 {
    if poly.is_monomial() {
        return 1.0;
    }
    poly.normalized(qp * n_loc) / poly.normalized(n_loc)
}

/// Lower bound on the scale-up of the decomposed algorithm.
pub fn theoretical_scaleup(
    rho_g: f64,
    rho_dd: f64,
    n_loc: f64,
    qp: f64,
    poly: &ComplexityPoly,
) -> f64 {
    (rho_g / rho_dd) * alpha_poly(poly, n_loc, qp) * qp.powi(poly.degree() as i32 - 1)
}

/// Surface-to-volume ratio `2(1/D_t + 1/D_s)` of a `D_t × D_s` subdomain.
pub fn surface_to_volume(d_t: usize, d_s: usize) -> Result<f64> {
    if d_t == 0 {
        return Err(DdvarError::config("perf.d_t", "must be at least 1"));
    }
    if d_s == 0 {
        return Err(DdvarError::config("perf.d_s", "must be at least 1"));
    }
    Ok(2.0 * (1.0 / d_t as f64 + 1.0 / d_s as f64))
}

/// Corner term by which the discrete halo count of a subdomain with
/// overlaps `o_t`, `o_s` exceeds the continuous ratio (for unit overlaps):
/// `4 o_t o_s / (D_t D_s)`.
pub fn halo_corner_correction(d_t: usize, d_s: usize, o_t: usize, o_s: usize) -> f64 {
    (4 * o_t * o_s) as f64 / (d_t * d_s) as f64
}

/// Halo points over owned points, counted on the subdomain's index sets.
pub fn halo_core_ratio(sub: &Subdomain) -> f64 {
    let total = sub.time_range.len() * sub.lon_range.len() * sub.lat_range.len();
    let core = sub.owned_time_range.len() * sub.owned_lon_range.len() * sub.owned_lat_range.len();
    (total - core) as f64 / core as f64
}

/// Measured software scale-up from `1` to `QP` subdomains.
///
/// The default reads the numerator as the undecomposed solve time
/// `T_flop(N)`. With `literal` the local time `T_flop(N_loc)` is used in its
/// place, which bounds the value by `1/QP`.
pub fn measured_scaleup(
    t_flop_global: f64,
    t_flop_loc: f64,
    t_oh: f64,
    qp: f64,
    literal: bool,
) -> f64 {
    let num = if literal { t_flop_loc } else { t_flop_global };
    num / (qp * (t_flop_loc + t_oh))
}

/// `α` from a local accelerator speedup and the surface-to-volume ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaMeasured {
    pub value: f64,
    /// False when `s_loc < 1` or `sv` is outside `[0, 1 − 1/s_loc)`; the
    /// value is still computed.
    pub in_model: bool,
}

pub fn alpha_measured(s_loc: f64, sv_ratio: f64) -> AlphaMeasured {
    let value = s_loc / (1.0 + s_loc * sv_ratio);
    let in_model = s_loc >= 1.0 && sv_ratio >= 0.0 && sv_ratio < 1.0 - 1.0 / s_loc;
    AlphaMeasured { value, in_model }
}

/// One point of a scalability study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalabilityRecord {
    pub qp: usize,
    /// `D_t · D_s`.
    pub n_loc: usize,
    pub rho_g: f64,
    pub rho_dd: f64,
    /// Seconds.
    pub t_flop: f64,
    pub t_oh: f64,
    /// Local accelerator speedup.
    pub s_loc: f64,
}

impl ScalabilityRecord {
    pub fn validate(&self) -> Result<()> {
        if self.qp == 0 || self.n_loc == 0 {
            return Err(DdvarError::config(
                "perf.record",
                "qp and n_loc must be positive",
            ));
        }
        for (k, v) in [
            ("rho_g", self.rho_g),
            ("rho_dd", self.rho_dd),
            ("t_flop", self.t_flop),
            ("s_loc", self.s_loc),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DdvarError::config(
                    format!("perf.record.{k}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.t_oh.is_finite() && self.t_oh >= 0.0) {
            return Err(DdvarError::config(
                "perf.record.t_oh",
                "must be non-negative",
            ));
        }
        Ok(())
    }

    /// `N = QP · N_loc` for the uniform decomposition.
    pub fn global_size(&self) -> usize {
        self.qp * self.n_loc
    }

    /// Builds a record from an undecomposed run and a decomposed run of the
    /// same problem. Local time is the decomposed solve time per subdomain;
    /// overhead is exchange plus gather.
    pub fn from_reports(
        global: &AnalysisReport,
        dd: &AnalysisReport,
        n_loc: usize,
    ) -> Result<Self> {
        let qp = dd.subdomain_count;
        let rec = ScalabilityRecord {
            qp,
            n_loc,
            rho_g: global.iterations.rho_run.max(1) as f64,
            rho_dd: dd.iterations.rho_run.max(1) as f64,
            t_flop: (dd.timings.local_solve / qp as f64).max(f64::MIN_POSITIVE),
            t_oh: dd.timings.exchange + dd.timings.gather,
            s_loc: 1.0,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn theoretical(&self, poly: &ComplexityPoly) -> f64 {
        theoretical_scaleup(
            self.rho_g,
            self.rho_dd,
            self.n_loc as f64,
            self.qp as f64,
            poly,
        )
    }
}
