//! Background error covariance `B = V Vᵀ` through its factor `V`.
//!
//! The Gaussian kind is separable: per variable, `V = σ_b (K_lat ⊗ K_lon)`
//! with 1-D Gaussian kernel matrices. Longitude uses a sum over periodic
//! images so the circulant stays positive definite. A subdomain factor is
//! the principal submatrix on its index set, which keeps it SPD; it is not
//! renormalised, so rows near a cut edge sum to slightly less than the
//! interior rows.

use serde::{Deserialize, Serialize};

use crate::error::{DdvarError, Result};
use crate::spacetime::{SpaceTimeGrid, NVARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    Diagonal,
    Gaussian,
}

/// User-facing description of `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    /// Background error standard deviation, in state units.
    pub sigma_b: f64,
    /// Correlation length in grid points (Gaussian kind only).
    pub length_scale: f64,
}

impl Default for CovarianceSpec {
    fn default() -> Self {
        CovarianceSpec {
            kind: CovarianceKind::Diagonal,
            sigma_b: 1.0,
            length_scale: 1.0,
        }
    }
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_b.is_finite() && self.sigma_b > 0.0) {
            return Err(DdvarError::config(
                "assimilation.sigma_b",
                format!("must be positive, got {}", self.sigma_b),
            ));
        }
        if self.kind == CovarianceKind::Gaussian
            && !(self.length_scale.is_finite() && self.length_scale > 0.0)
        {
            return Err(DdvarError::config(
                "assimilation.length_scale",
                format!(
                    "must be positive for the gaussian kind, got {}",
                    self.length_scale
                ),
            ));
        }
        Ok(())
    }
}

/// Dense symmetric kernel with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
struct Kernel1d {
    n: usize,
    k: Vec<f64>,
    chol: Vec<f64>,
}

impl Kernel1d {
    fn new(idx: &[usize], entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let n = idx.len();
        let mut k = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                k[a * n + b] = entry(idx[a], idx[b]);
            }
        }
        let chol = cholesky(&k, n)?;
        Ok(Kernel1d { n, k, chol })
    }

    /// `out[s*stride] = Σ_t K[s][t] x[t*stride]` for one strided line.
    fn mul_line(&self, x: &[f64], base: usize, stride: usize, out: &mut [f64]) {
        for s in 0..self.n {
            let row = &self.k[s * self.n..(s + 1) * self.n];
            let mut acc = 0.0;
            for (t, &kv) in row.iter().enumerate() {
                acc += kv * x[base + t * stride];
            }
            out[base + s * stride] = acc;
        }
    }

    fn solve_line(&self, x: &mut [f64], base: usize, stride: usize) {
        let n = self.n;
        let l = &self.chol;
        let mut y: Vec<f64> = (0..n).map(|t| x[base + t * stride]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for (t, v) in y.into_iter().enumerate() {
            x[base + t * stride] = v;
        }
    }
}

fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(DdvarError::Numerical(format!(
                        "correlation kernel is not positive definite at row {i}"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

fn gauss(d: f64, len: f64) -> f64 {
    (-d * d / (2.0 * len * len)).exp()
}

/// Periodic kernel value between longitudes `a` and `b` on a circle of `n`.
fn periodic_entry(a: usize, b: usize, n: usize, len: f64) -> f64 {
    let d = a as f64 - b as f64;
    let images = (8.0 * len / n as f64).ceil() as i64 + 1;
    (-images..=images)
        .map(|m| gauss(d + (m * n as i64) as f64, len))
        .sum()
}

/// Factor `V` on a product index set `lats × lons`, for every variable.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFactor {
    spec: CovarianceSpec,
    nlon: usize,
    lons: Vec<usize>,
    lats: Vec<usize>,
    kernels: Option<(Kernel1d, Kernel1d)>,
}

impl CovarianceFactor {
    /// Factor over the whole grid.
    pub fn global(grid: &SpaceTimeGrid, spec: &CovarianceSpec) -> Result<Self> {
        let lons: Vec<usize> = (0..grid.nlon).collect();
        let lats: Vec<usize> = (0..grid.nlat).collect();
        Self::on_region(grid.nlon, &lons, &lats, spec)
    }

    /// Factor restricted to the given global longitude and latitude indices.
    pub fn on_region(
        nlon: usize,
        lons: &[usize],
        lats: &[usize],
        spec: &CovarianceSpec,
    ) -> Result<Self> {
        spec.validate()?;
        let kernels = match spec.kind {
            CovarianceKind::Diagonal => None,
            CovarianceKind::Gaussian => {
                let len = spec.length_scale;
                let lon_norm: f64 = (0..nlon).map(|b| periodic_entry(0, b, nlon, len)).sum();
                let reach = (10.0 * len).ceil() as i64;
                let lat_norm: f64 = (-reach..=reach).map(|d| gauss(d as f64, len)).sum();
                let klon = Kernel1d::new(lons, |a, b| periodic_entry(a, b, nlon, len) / lon_norm)?;
                let klat = Kernel1d::new(lats, |a, b| gauss(a as f64 - b as f64, len) / lat_norm)?;
                Some((klon, klat))
            }
        };
        Ok(CovarianceFactor {
            spec: spec.clone(),
            nlon,
            lons: lons.to_vec(),
            lats: lats.to_vec(),
            kernels,
        })
    }

    /// Same kind and parameters on a different index set.
    pub fn restrict(&self, lons: &[usize], lats: &[usize]) -> Result<Self> {
        Self::on_region(self.nlon, lons, lats, &self.spec)
    }

    pub fn spec(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn sigma_b(&self) -> f64 {
        self.spec.sigma_b
    }

    pub fn len(&self) -> usize {
        NVARS * self.lons.len() * self.lats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(DdvarError::Dimension(format!(
                "covariance factor of size {} applied to a vector of length {}",
                self.len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// `V x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let s = self.spec.sigma_b;
        let Some((klon, klat)) = &self.kernels else {
            return Ok(x.iter().map(|v| s * v).collect());
        };
        let (nx, ny) = (self.lons.len(), self.lats.len());
        let mut tmp = vec![0.0; x.len()];
        for var in 0..NVARS {
            for ly in 0..ny {
                klon.mul_line(x, (var * ny + ly) * nx, 1, &mut tmp);
            }
        }
        let mut out = vec![0.0; x.len()];
        for var in 0..NVARS {
            for lx in 0..nx {
                klat.mul_line(&tmp, var * ny * nx + lx, nx, &mut out);
            }
        }
        out.iter_mut().for_each(|v| *v *= s);
        Ok(out)
    }

    /// `Vᵀ x`; the factor is symmetric.
    pub fn apply_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(x)
    }

    /// `V⁻¹ x`, exact for the diagonal kind and by Cholesky solves otherwise.
    pub fn inverse_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let s = self.spec.sigma_b;
        let Some((klon, klat)) = &self.kernels else {
            return Ok(x.iter().map(|v| v / s).collect());
        };
        let (nx, ny) = (self.lons.len(), self.lats.len());
        let mut out = x.to_vec();
        for var in 0..NVARS {
            for ly in 0..ny {
                klon.solve_line(&mut out, (var * ny + ly) * nx, 1);
            }
            for lx in 0..nx {
                klat.solve_line(&mut out, var * ny * nx + lx, nx);
            }
        }
        out.iter_mut().for_each(|v| *v /= s);
        Ok(out)
    }

    /// `B x = V Vᵀ x`.
    pub fn b_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(&self.apply_transpose(x)?)
    }

    /// `B⁻¹ x = V⁻ᵀ V⁻¹ x`.
    pub fn b_inverse_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inverse_apply(&self.inverse_apply(x)?)
    }

    /// `‖x‖²_{B⁻¹} = ‖V⁻¹ x‖²`.
    pub fn b_inverse_norm2(&self, x: &[f64]) -> Result<f64> {
        Ok(self.inverse_apply(x)?.iter().map(|v| v * v).sum())
    }
}
