use super::decomposition::Subdomain;
use super::grid::{SpaceTimeGrid, NVARS};
use crate::error::{DdvarError, Result};

/// Values of all prognostic variables on every grid point and time level,
/// stored as `[level][var][lat][lon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub nt: usize,
    pub nlat: usize,
    pub nlon: usize,
    pub data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        SpaceTimeField {
            nt: grid.nt,
            nlat: grid.nlat,
            nlon: grid.nlon,
            data: vec![0.0; grid.nt * grid.state_len()],
        }
    }

    pub fn from_levels(grid: &SpaceTimeGrid, levels: &[&[f64]]) -> Result<Self> {
        if levels.len() != grid.nt {
            return Err(DdvarError::Dimension(format!(
                "expected {} levels, got {}",
                grid.nt,
                levels.len()
            )));
        }
        let mut data = Vec::with_capacity(grid.nt * grid.state_len());
        for l in levels {
            if l.len() != grid.state_len() {
                return Err(DdvarError::Dimension(format!(
                    "level length {} does not match state length {}",
                    l.len(),
                    grid.state_len()
                )));
            }
            data.extend_from_slice(l);
        }
        Ok(SpaceTimeField {
            nt: grid.nt,
            nlat: grid.nlat,
            nlon: grid.nlon,
            data,
        })
    }

    pub fn matches(&self, grid: &SpaceTimeGrid) -> bool {
        self.nt == grid.nt
            && self.nlat == grid.nlat
            && self.nlon == grid.nlon
            && self.data.len() == grid.nt * grid.state_len()
    }

    pub fn level_len(&self) -> usize {
        NVARS * self.nlat * self.nlon
    }

    pub fn level(&self, t: usize) -> &[f64] {
        let n = self.level_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn level_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.level_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    #[inline]
    pub fn offset(&self, t: usize, var: usize, lat: usize, lon: usize) -> usize {
        ((t * NVARS + var) * self.nlat + lat) * self.nlon + lon
    }
}

/// Values on one subdomain's halo-inclusive region, `[level][var][lat][lon]`
/// in the subdomain's local ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalField {
    pub levels: Vec<usize>,
    pub lons: Vec<usize>,
    pub lats: Vec<usize>,
    pub data: Vec<f64>,
}

impl LocalField {
    pub fn zeros(sub: &Subdomain) -> Self {
        LocalField {
            levels: sub.levels.clone(),
            lons: sub.lons.clone(),
            lats: sub.lats.clone(),
            data: vec![0.0; sub.local_len()],
        }
    }

    pub fn matches(&self, sub: &Subdomain) -> bool {
        self.levels == sub.levels
            && self.lons == sub.lons
            && self.lats == sub.lats
            && self.data.len() == sub.local_len()
    }

    pub fn level_len(&self) -> usize {
        NVARS * self.lats.len() * self.lons.len()
    }

    pub fn level(&self, lt: usize) -> &[f64] {
        let n = self.level_len();
        &self.data[lt * n..(lt + 1) * n]
    }

    pub fn level_mut(&mut self, lt: usize) -> &mut [f64] {
        let n = self.level_len();
        &mut self.data[lt * n..(lt + 1) * n]
    }

    #[inline]
    pub fn offset(&self, lt: usize, var: usize, ly: usize, lx: usize) -> usize {
        ((lt * NVARS + var) * self.lats.len() + ly) * self.lons.len() + lx
    }
}
