use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{DdvarError, Result};

/// Number of prognostic variables (u, v, h).
pub const NVARS: usize = 3;

/// Regular longitude-latitude grid over a window of `nt` time levels.
///
/// Latitudes are `theta0 + j * dtheta`; longitudes wrap periodically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub nlon: usize,
    pub nlat: usize,
    /// Number of time levels in the assimilation window.
    pub nt: usize,
    /// Time step in seconds.
    pub dt: f64,
    pub dlambda: f64,
    pub dtheta: f64,
    /// Southernmost latitude in radians.
    pub theta0: f64,
}

impl SpaceTimeGrid {
    pub fn new(
        nlon: usize,
        nlat: usize,
        nt: usize,
        dt: f64,
        dlambda: f64,
        dtheta: f64,
        theta0: f64,
    ) -> Result<Self> {
        let g = SpaceTimeGrid {
            nlon,
            nlat,
            nt,
            dt,
            dlambda,
            dtheta,
            theta0,
        };
        g.validate()?;
        Ok(g)
    }

    /// Full circle in longitude and `nlat` rows evenly spaced between the
    /// poles, keeping half a spacing of clearance at each end.
    pub fn uniform(nlon: usize, nlat: usize, nt: usize, dt: f64) -> Result<Self> {
        let dtheta = PI / (nlat as f64 + 1.0);
        Self::new(
            nlon,
            nlat,
            nt,
            dt,
            2.0 * PI / nlon as f64,
            dtheta,
            -FRAC_PI_2 + dtheta,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.nlon < 3 {
            return Err(DdvarError::config("grid.nlon", "must be at least 3"));
        }
        if self.nlat < 3 {
            return Err(DdvarError::config("grid.nlat", "must be at least 3"));
        }
        if self.nt < 1 {
            return Err(DdvarError::config("grid.nt", "must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(DdvarError::config("grid.dt", "must be positive and finite"));
        }
        if !(self.dlambda > 0.0) || !(self.dtheta > 0.0) {
            return Err(DdvarError::config(
                "grid.dlambda",
                "grid spacings must be positive",
            ));
        }
        let limit = FRAC_PI_2 - self.dtheta / 2.0;
        for j in 0..self.nlat {
            let th = self.latitude(j);
            if !(th.abs() < limit) {
                return Err(DdvarError::config(
                    "grid.theta0",
                    format!("latitude row {j} at {th:.6} rad is within half a spacing of a pole"),
                ));
            }
        }
        Ok(())
    }

    pub fn latitude(&self, j: usize) -> f64 {
        self.theta0 + j as f64 * self.dtheta
    }

    /// Points per variable on one time level.
    pub fn points(&self) -> usize {
        self.nlon * self.nlat
    }

    /// Spatial problem size K = nlon * nlat * 3.
    pub fn state_len(&self) -> usize {
        self.points() * NVARS
    }

    /// Flat index of `(var, lat, lon)` inside one state vector.
    #[inline]
    pub fn index(&self, var: usize, lat: usize, lon: usize) -> usize {
        (var * self.nlat + lat) * self.nlon + lon
    }

    /// Wrap a possibly negative longitude index.
    #[inline]
    pub fn wrap_lon(&self, i: isize) -> usize {
        i.rem_euclid(self.nlon as isize) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_excludes_poles() {
        let g = SpaceTimeGrid::uniform(8, 8, 4, 600.0).unwrap();
        assert_eq!(g.state_len(), 192);
        let last = g.latitude(g.nlat - 1);
        assert!((last - (FRAC_PI_2 - g.dtheta)).abs() < 1e-12);
    }

    #[test]
    fn rejects_polar_row() {
        let r = SpaceTimeGrid::new(8, 4, 1, 1.0, 0.1, 0.5, -FRAC_PI_2);
        assert!(matches!(r, Err(DdvarError::Config { .. })));
    }

    #[test]
    fn rejects_small_dimensions() {
        assert!(SpaceTimeGrid::uniform(2, 8, 1, 1.0).is_err());
        assert!(SpaceTimeGrid::uniform(8, 8, 0, 1.0).is_err());
        assert!(SpaceTimeGrid::uniform(8, 8, 1, 0.0).is_err());
    }

    #[test]
    fn lon_wraps() {
        let g = SpaceTimeGrid::uniform(8, 4, 1, 1.0).unwrap();
        assert_eq!(g.wrap_lon(-1), 7);
        assert_eq!(g.wrap_lon(8), 0);
        assert_eq!(g.wrap_lon(17), 1);
    }
}
