use serde::{Deserialize, Serialize};

use crate::error::{DdvarError, Result};
use crate::spacetime::SpaceTimeGrid;

/// Which form of the discrete stencils to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StencilVariant {
    /// Consistent semi-discretization of the continuous equations.
    #[default]
    Consistent,
    /// The formulas exactly as printed: doubled Coriolis bracket, `u` in
    /// the meridional advection of `v`, and a height tendency scaled by
    /// `alpha_tz` without metric factors.
    Literal,
}

/// Physical constants and Turkel-Zwas parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweParams {
    /// Earth radius (m).
    pub a: f64,
    /// Gravity (m/s^2).
    pub g: f64,
    /// Earth angular speed (rad/s).
    pub omega_rot: f64,
    /// Turkel-Zwas weighting in [0, 1].
    pub alpha_tz: f64,
    /// Coarse-stencil skip in longitude.
    pub p_tz: usize,
    /// Coarse-stencil skip in latitude.
    pub q_tz: usize,
    /// Courant number limit for accepted steps.
    pub cfl_limit: f64,
    pub variant: StencilVariant,
}

impl Default for SweParams {
    fn default() -> Self {
        SweParams {
            a: 6.371e6,
            g: 9.80616,
            omega_rot: 7.292e-5,
            alpha_tz: 0.5,
            p_tz: 2,
            q_tz: 2,
            cfl_limit: 0.8,
            variant: StencilVariant::Consistent,
        }
    }
}

impl SweParams {
    /// Defaults with the coarse-stencil skips reduced to fit a small grid.
    pub fn for_grid(grid: &SpaceTimeGrid) -> Self {
        let mut p = SweParams::default();
        p.p_tz = p.p_tz.min((grid.nlon - 1) / 2).max(1);
        p.q_tz = p.q_tz.min((grid.nlat - 1) / 2).max(1);
        p
    }

    pub fn validate(&self, grid: &SpaceTimeGrid) -> Result<()> {
        if !(self.a > 0.0) || !(self.g > 0.0) {
            return Err(DdvarError::config(
                "model.a",
                "radius and gravity must be positive",
            ));
        }
        if !self.omega_rot.is_finite() {
            return Err(DdvarError::config("model.omega_rot", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.alpha_tz) {
            return Err(DdvarError::config("model.alpha_tz", "must lie in [0, 1]"));
        }
        if self.p_tz < 1 || 2 * self.p_tz >= grid.nlon {
            return Err(DdvarError::config(
                "model.p_tz",
                format!(
                    "must satisfy 1 <= p_tz < nlon/2 = {}",
                    grid.nlon as f64 / 2.0
                ),
            ));
        }
        if self.q_tz < 1 || 2 * self.q_tz >= grid.nlat {
            return Err(DdvarError::config(
                "model.q_tz",
                format!(
                    "must satisfy 1 <= q_tz < nlat/2 = {}",
                    grid.nlat as f64 / 2.0
                ),
            ));
        }
        if !(self.cfl_limit > 0.0) {
            return Err(DdvarError::config("model.cfl_limit", "must be positive"));
        }
        Ok(())
    }

    /// 1 / (2 a dlambda), the centred longitude difference factor.
    pub fn sigma_lon(&self, grid: &SpaceTimeGrid) -> f64 {
        1.0 / (2.0 * self.a * grid.dlambda)
    }

    /// 1 / (2 a dtheta), the centred latitude difference factor.
    pub fn sigma_lat(&self, grid: &SpaceTimeGrid) -> f64 {
        1.0 / (2.0 * self.a * grid.dtheta)
    }

    /// Coriolis parameter 2 Omega sin(theta).
    pub fn coriolis(&self, theta: f64) -> f64 {
        2.0 * self.omega_rot * theta.sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn coriolis_limits() {
        let p = SweParams::default();
        assert_eq!(p.coriolis(0.0), 0.0);
        assert_eq!(p.coriolis(FRAC_PI_2), 2.0 * p.omega_rot);
    }

    #[test]
    fn skip_counts_bounded_by_grid() {
        let g = SpaceTimeGrid::uniform(6, 4, 1, 1.0).unwrap();
        let p = SweParams::for_grid(&g);
        assert_eq!((p.p_tz, p.q_tz), (2, 1));
        p.validate(&g).unwrap();
        let mut bad = p;
        bad.p_tz = 3;
        assert!(bad.validate(&g).is_err());
    }
}
