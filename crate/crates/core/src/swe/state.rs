use crate::spacetime::{SpaceTimeGrid, NVARS};

/// Prognostic fields `(u, v, h)` stored contiguously as `[var][lat][lon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweState {
    pub nlon: usize,
    pub nlat: usize,
    pub data: Vec<f64>,
}

impl SweState {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        SweState {
            nlon: grid.nlon,
            nlat: grid.nlat,
            data: vec![0.0; grid.state_len()],
        }
    }

    pub fn from_vec(grid: &SpaceTimeGrid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.state_len(), "state length mismatch");
        SweState {
            nlon: grid.nlon,
            nlat: grid.nlat,
            data,
        }
    }

    /// Fluid at rest with uniform height `h0`.
    pub fn rest(grid: &SpaceTimeGrid, h0: f64) -> Self {
        let mut s = Self::zeros(grid);
        s.h_mut().iter_mut().for_each(|h| *h = h0);
        s
    }

    fn plane(&self) -> usize {
        self.nlon * self.nlat
    }

    pub fn u(&self) -> &[f64] {
        &self.data[..self.plane()]
    }

    pub fn v(&self) -> &[f64] {
        let n = self.plane();
        &self.data[n..2 * n]
    }

    pub fn h(&self) -> &[f64] {
        let n = self.plane();
        &self.data[2 * n..3 * n]
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        let n = self.plane();
        &mut self.data[..n]
    }

    pub fn v_mut(&mut self) -> &mut [f64] {
        let n = self.plane();
        &mut self.data[n..2 * n]
    }

    pub fn h_mut(&mut self) -> &mut [f64] {
        let n = self.plane();
        &mut self.data[2 * n..3 * n]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_h(&self) -> f64 {
        self.h().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SweState) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn matches(&self, grid: &SpaceTimeGrid) -> bool {
        self.nlon == grid.nlon && self.nlat == grid.nlat && self.data.len() == NVARS * grid.points()
    }
}
