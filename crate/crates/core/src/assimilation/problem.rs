//! Global and local 4D-Var functionals.
//!
//! A [`LocalProblem`] owns everything a subdomain solve needs. Its control is
//! the state on the halo-inclusive spatial region at the first level of the
//! window. The control is embedded into a full-grid state whose remaining
//! values are frozen (`exterior`) and propagated with the full model, so the
//! local trajectory is the restriction of the global one about the composed
//! state. Observations and overlap targets are both point samples of that
//! trajectory; they differ only in their weights:
//!
//! ```text
//! J = ‖x − b‖²_{B⁻¹} + λ Σ (v − z)²/σ_o² + μ Σ (t − z)²/σ_b²
//! ```
//!
//! The overlap weight uses `1/σ_b²`, the diagonal of `B⁻¹` for the diagonal
//! kind; the Gaussian kind reuses the same scaling.
//!
//! The global problem is the single-subdomain special case.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::covariance::CovarianceFactor;
use super::observations::ObservationSet;
use crate::error::{DdvarError, Result};
use crate::spacetime::{
    overlap_region, Decomposition, LocalField, SpaceTimeGrid, Subdomain, NVARS,
};
use crate::swe::{propagate, Linearization, SweParams, SweState, Trajectory};

/// Terms of a functional value. `total = background + λ·observation + μ·overlap`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub background: f64,
    pub observation: f64,
    pub overlap: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(background: f64, observation: f64, overlap: f64, lambda: f64, mu: f64) -> Self {
        CostBreakdown {
            background,
            observation,
            overlap,
            total: background + lambda * observation + mu * overlap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Observation,
    Overlap,
}

/// One sampled trajectory value with its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Level relative to the window start.
    pub level: usize,
    /// Flat index into the full-grid state.
    pub index: usize,
    pub value: f64,
    pub kind: SampleKind,
}

/// Immutable inputs shared by the global problem and every local problem.
#[derive(Debug, Clone)]
pub struct AssimilationSetup {
    pub grid: SpaceTimeGrid,
    pub params: SweParams,
    /// Background initial state `u0_b`.
    pub background: SweState,
    pub factor: CovarianceFactor,
    pub obs: ObservationSet,
    pub lambda: f64,
    pub mu: f64,
}

impl AssimilationSetup {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.params.validate(&self.grid)?;
        self.obs.validate(&self.grid)?;
        if !self.background.matches(&self.grid) {
            return Err(DdvarError::Dimension(
                "background state does not match the grid".into(),
            ));
        }
        if self.factor.len() != self.grid.state_len() {
            return Err(DdvarError::Dimension(
                "covariance factor does not cover the grid".into(),
            ));
        }
        for (key, v) in [
            ("assimilation.lambda", self.lambda),
            ("assimilation.mu", self.mu),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DdvarError::config(
                    key,
                    format!("must be nonnegative, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// A (possibly local) regularised least-squares problem in the control `x`.
#[derive(Debug, Clone)]
pub struct LocalProblem {
    pub grid: SpaceTimeGrid,
    pub params: SweParams,
    /// First global level of the window.
    pub start: usize,
    pub nlevels: usize,
    pub lons: Vec<usize>,
    pub lats: Vec<usize>,
    /// Full-grid state at `start`; only values outside the region are used.
    pub exterior: SweState,
    /// Background anchor, control-shaped.
    pub background: Vec<f64>,
    pub factor: CovarianceFactor,
    /// Sorted by level.
    pub samples: Vec<Sample>,
    pub sigma_o: f64,
    pub lambda: f64,
    pub mu: f64,
    region: Vec<usize>,
}

fn region_indices(grid: &SpaceTimeGrid, lons: &[usize], lats: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(NVARS * lons.len() * lats.len());
    for var in 0..NVARS {
        for &j in lats {
            for &i in lons {
                out.push(grid.index(var, j, i));
            }
        }
    }
    out
}

fn observation_samples(
    setup: &AssimilationSetup,
    levels: std::ops::Range<usize>,
    lons: &[usize],
    lats: &[usize],
) -> Vec<Sample> {
    let full = lons.len() == setup.grid.nlon && lats.len() == setup.grid.nlat;
    let mut out = Vec::new();
    for (slot, &t) in setup.obs.times.iter().enumerate() {
        if !levels.contains(&t) {
            continue;
        }
        for (&[i, j, var], &value) in setup.obs.locations[slot]
            .iter()
            .zip(&setup.obs.values[slot])
        {
            if full || (lons.contains(&i) && lats.contains(&j)) {
                out.push(Sample {
                    level: t - levels.start,
                    index: setup.grid.index(var, j, i),
                    value,
                    kind: SampleKind::Observation,
                });
            }
        }
    }
    out
}

impl LocalProblem {
    /// The undecomposed problem over the whole window.
    pub fn global(setup: &AssimilationSetup) -> Result<Self> {
        let grid = &setup.grid;
        let lons: Vec<usize> = (0..grid.nlon).collect();
        let lats: Vec<usize> = (0..grid.nlat).collect();
        let mut samples = observation_samples(setup, 0..grid.nt, &lons, &lats);
        samples.sort_by_key(|s| s.level);
        Ok(LocalProblem {
            grid: *grid,
            params: setup.params,
            start: 0,
            nlevels: grid.nt,
            region: region_indices(grid, &lons, &lats),
            lons,
            lats,
            exterior: setup.background.clone(),
            background: setup.background.data.clone(),
            factor: setup.factor.clone(),
            samples,
            sigma_o: setup.obs.sigma_o,
            lambda: setup.lambda,
            mu: setup.mu,
        })
    }

    /// Restricted problem on `sub`. `neighbor_overlaps` maps each adjacent
    /// subdomain id to its current iterate on the shared overlap region, in
    /// the `[level][var][lat][lon]` order of [`crate::spacetime::OverlapRegion`].
    pub fn for_subdomain(
        setup: &AssimilationSetup,
        dec: &Decomposition,
        sub: &Subdomain,
        exterior: SweState,
        anchor: Vec<f64>,
        neighbor_overlaps: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<Self> {
        let grid = &setup.grid;
        let start = sub.first_level();
        let nlevels = sub.levels.len();
        if anchor.len() != sub.control_len() {
            return Err(DdvarError::Dimension(format!(
                "subdomain {}: anchor of length {} for a control of {}",
                sub.id,
                anchor.len(),
                sub.control_len()
            )));
        }
        let mut samples = observation_samples(setup, start..start + nlevels, &sub.lons, &sub.lats);
        for nb in dec.neighbors(sub.id) {
            let values = neighbor_overlaps.get(&nb).ok_or_else(|| {
                DdvarError::Protocol(format!(
                    "subdomain {} has no overlap data from neighbour {nb}",
                    sub.id
                ))
            })?;
            let region = overlap_region(sub, &dec.subdomains[nb]);
            if values.len() != region.len() {
                return Err(DdvarError::Protocol(format!(
                    "subdomain {}: neighbour {nb} sent {} overlap values, expected {}",
                    sub.id,
                    values.len(),
                    region.len()
                )));
            }
            let mut it = values.iter();
            for &t in &region.levels {
                for var in 0..NVARS {
                    for &j in &region.lats {
                        for &i in &region.lons {
                            samples.push(Sample {
                                level: t - start,
                                index: grid.index(var, j, i),
                                value: *it.next().expect("length checked above"),
                                kind: SampleKind::Overlap,
                            });
                        }
                    }
                }
            }
        }
        samples.sort_by_key(|s| s.level);
        Ok(LocalProblem {
            grid: *grid,
            params: setup.params,
            start,
            nlevels,
            region: region_indices(grid, &sub.lons, &sub.lats),
            lons: sub.lons.clone(),
            lats: sub.lats.clone(),
            exterior,
            background: anchor,
            factor: setup.factor.restrict(&sub.lons, &sub.lats)?,
            samples,
            sigma_o: setup.obs.sigma_o,
            lambda: setup.lambda,
            mu: setup.mu,
        })
    }

    pub fn control_len(&self) -> usize {
        self.region.len()
    }

    /// Flat full-grid indices of the control entries.
    pub fn region(&self) -> &[usize] {
        &self.region
    }

    /// Restriction of a full-grid state to the control region.
    pub fn restrict_state(&self, state: &[f64]) -> Vec<f64> {
        self.region.iter().map(|&k| state[k]).collect()
    }

    /// Full-grid initial state for control `x`.
    pub fn compose(&self, x: &[f64]) -> Result<SweState> {
        self.check_control(x)?;
        let mut z = self.exterior.clone();
        for (&k, &v) in self.region.iter().zip(x) {
            z.data[k] = v;
        }
        Ok(z)
    }

    fn check_control(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.region.len() {
            return Err(DdvarError::Dimension(format!(
                "control of length {} for a region of {}",
                x.len(),
                self.region.len()
            )));
        }
        Ok(())
    }

    pub fn trajectory(&self, x: &[f64]) -> Result<Trajectory> {
        let z = self.compose(x)?;
        propagate(&z, &self.params, &self.grid, self.nlevels - 1)
    }

    /// Weight of each sample's squared residual in the total cost.
    pub fn weights(&self) -> Vec<f64> {
        let wo = self.lambda / (self.sigma_o * self.sigma_o);
        let sb = self.factor.sigma_b();
        let wv = self.mu / (sb * sb);
        self.samples
            .iter()
            .map(|s| match s.kind {
                SampleKind::Observation => wo,
                SampleKind::Overlap => wv,
            })
            .collect()
    }

    /// Stacked residuals `target − sample` along `traj`.
    pub fn residuals(&self, traj: &Trajectory) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.value - traj.states[s.level].data[s.index])
            .collect()
    }

    pub fn cost_along(&self, x: &[f64], traj: &Trajectory) -> Result<CostBreakdown> {
        let diff: Vec<f64> = x.iter().zip(&self.background).map(|(a, b)| a - b).collect();
        let background = self.factor.b_inverse_norm2(&diff)?;
        let sb2 = self.factor.sigma_b() * self.factor.sigma_b();
        let so2 = self.sigma_o * self.sigma_o;
        let (mut obs, mut ovl) = (0.0, 0.0);
        for (s, d) in self.samples.iter().zip(self.residuals(traj)) {
            match s.kind {
                SampleKind::Observation => obs += d * d / so2,
                SampleKind::Overlap => ovl += d * d / sb2,
            }
        }
        let cost = CostBreakdown::new(background, obs, ovl, self.lambda, self.mu);
        if !cost.total.is_finite() {
            return Err(DdvarError::Numerical("cost is not finite".into()));
        }
        Ok(cost)
    }

    pub fn cost(&self, x: &[f64]) -> Result<CostBreakdown> {
        let traj = self.trajectory(x)?;
        self.cost_along(x, &traj)
    }

    /// Last level carrying a sample.
    fn last_sampled_level(&self) -> usize {
        self.samples.last().map_or(0, |s| s.level)
    }

    /// Tangent-linear samples of a control increment about `lin`.
    pub fn sample_tlm(&self, lin: &Linearization, dx: &[f64]) -> Vec<f64> {
        let mut dz = vec![0.0; self.grid.state_len()];
        for (&k, &v) in self.region.iter().zip(dx) {
            dz[k] = v;
        }
        let mut level = 0;
        let mut out = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            while level < s.level {
                dz = lin.tlm_step(level, &dz);
                level += 1;
            }
            out.push(dz[s.index]);
        }
        out
    }

    /// Transpose of [`LocalProblem::sample_tlm`].
    pub fn sample_adj(&self, lin: &Linearization, dy: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.grid.state_len()];
        let mut next = self.samples.len();
        for level in (0..=self.last_sampled_level()).rev() {
            while next > 0 && self.samples[next - 1].level == level {
                next -= 1;
                w[self.samples[next].index] += dy[next];
            }
            if level > 0 {
                w = lin.adj_step(level - 1, &w);
            }
        }
        self.restrict_state(&w)
    }

    /// `∇J = 2 B⁻¹(x − b) − 2 Gᵀ W d`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let traj = self.trajectory(x)?;
        let lin = traj.linearize();
        let wd: Vec<f64> = self
            .residuals(&traj)
            .iter()
            .zip(self.weights())
            .map(|(d, w)| d * w)
            .collect();
        let gt = self.sample_adj(&lin, &wd);
        let diff: Vec<f64> = x.iter().zip(&self.background).map(|(a, b)| a - b).collect();
        let binv = self.factor.b_inverse_apply(&diff)?;
        Ok(binv
            .iter()
            .zip(gt)
            .map(|(b, g)| 2.0 * b - 2.0 * g)
            .collect())
    }

    /// The trajectory restricted to the region, as a local field.
    pub fn local_field(&self, traj: &Trajectory) -> LocalField {
        let n = self.region.len();
        let mut data = Vec::with_capacity(n * self.nlevels);
        for z in &traj.states {
            data.extend(self.region.iter().map(|&k| z.data[k]));
        }
        LocalField {
            levels: (self.start..self.start + self.nlevels).collect(),
            lons: self.lons.clone(),
            lats: self.lats.clone(),
            data,
        }
    }
}

/// Global functional at initial state `u0`; the overlap term is zero.
pub fn global_cost(u0: &SweState, setup: &AssimilationSetup) -> Result<CostBreakdown> {
    LocalProblem::global(setup)?
        .cost(&u0.data)
        .map_err(|e| e.context("global cost"))
}

/// Local functional of `problem` at control `u`.
pub fn local_cost(u: &[f64], problem: &LocalProblem) -> Result<CostBreakdown> {
    problem.cost(u)
}

/// Gradient of the global functional at `u0`.
pub fn cost_gradient(u0: &SweState, setup: &AssimilationSetup) -> Result<SweState> {
    let g = LocalProblem::global(setup)?.gradient(&u0.data)?;
    Ok(SweState::from_vec(&setup.grid, g))
}
