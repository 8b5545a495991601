//! Point observations: network layout, selection operators, synthetic
//! observations and misfits.

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DdvarError, Result};
use crate::rng::{substream, OBSERVATION_LAYOUT, OBSERVATION_NOISE};
use crate::spacetime::{SpaceTimeGrid, NVARS};
use crate::swe::Trajectory;

/// Sampling pattern for synthetic observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutSpec {
    /// Observe every `every`-th time level, starting at level 0.
    pub every: usize,
    /// Fraction of eligible grid points in the network.
    pub fraction: f64,
    /// Skip latitude rows whose coarse stencil is clamped.
    pub exclude_boundary_rows: bool,
    /// Observed variables, 0 = u, 1 = v, 2 = h.
    pub variables: Vec<usize>,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        LayoutSpec {
            every: 2,
            fraction: 0.1,
            exclude_boundary_rows: true,
            variables: vec![0, 1, 2],
        }
    }
}

impl LayoutSpec {
    /// Every variable at every point and level.
    pub fn dense() -> Self {
        LayoutSpec {
            every: 1,
            fraction: 1.0,
            exclude_boundary_rows: false,
            variables: vec![0, 1, 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.every == 0 {
            return Err(DdvarError::config(
                "assimilation.layout.every",
                "must be at least 1",
            ));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(DdvarError::config(
                "assimilation.layout.fraction",
                format!("must lie in (0, 1], got {}", self.fraction),
            ));
        }
        if self.variables.is_empty() || self.variables.iter().any(|&v| v >= NVARS) {
            return Err(DdvarError::config(
                "assimilation.layout.variables",
                "must list variable indices from {0, 1, 2} (u, v, h)",
            ));
        }
        Ok(())
    }
}

/// Observation times and per-time `(lon, lat, var)` locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub times: Vec<usize>,
    pub locations: Vec<Vec<[usize; 3]>>,
}

impl ObservationLayout {
    /// Fixed network drawn once from the layout substream and reused at
    /// every observation time. `boundary_rows` is the number of clamped
    /// latitude rows at each edge.
    pub fn generate(
        grid: &SpaceTimeGrid,
        spec: &LayoutSpec,
        boundary_rows: usize,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let rows: Vec<usize> = if spec.exclude_boundary_rows && 2 * boundary_rows < grid.nlat {
            (boundary_rows..grid.nlat - boundary_rows).collect()
        } else {
            (0..grid.nlat).collect()
        };
        let eligible: Vec<(usize, usize)> = rows
            .iter()
            .flat_map(|&j| (0..grid.nlon).map(move |i| (i, j)))
            .collect();
        let count =
            ((spec.fraction * eligible.len() as f64).round() as usize).clamp(1, eligible.len());
        let mut picked: Vec<usize> = if count == eligible.len() {
            (0..count).collect()
        } else {
            sample(
                &mut substream(seed, OBSERVATION_LAYOUT),
                eligible.len(),
                count,
            )
            .into_vec()
        };
        picked.sort_unstable();
        let mut vars = spec.variables.clone();
        vars.sort_unstable();
        vars.dedup();
        let mut network = Vec::with_capacity(count * vars.len());
        for &var in &vars {
            for &p in &picked {
                let (i, j) = eligible[p];
                network.push([i, j, var]);
            }
        }
        let times: Vec<usize> = (0..grid.nt).step_by(spec.every).collect();
        let locations = vec![network; times.len()];
        Ok(ObservationLayout { times, locations })
    }

    pub fn count(&self) -> usize {
        self.locations.iter().map(Vec::len).sum()
    }
}

/// Selection operator `H^(k)` for one observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationOperator {
    pub indices: Vec<usize>,
}

impl ObservationOperator {
    pub fn new(grid: &SpaceTimeGrid, locations: &[[usize; 3]]) -> Self {
        ObservationOperator {
            indices: locations
                .iter()
                .map(|&[i, j, v]| grid.index(v, j, i))
                .collect(),
        }
    }

    pub fn apply(&self, state: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&k| state[k]).collect()
    }

    /// Transpose: scatter-add `dy` into `out`.
    pub fn apply_transpose(&self, dy: &[f64], out: &mut [f64]) {
        for (&k, &v) in self.indices.iter().zip(dy) {
            out[k] += v;
        }
    }
}

/// Observation values with their error statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub times: Vec<usize>,
    pub locations: Vec<Vec<[usize; 3]>>,
    pub values: Vec<Vec<f64>>,
    /// Standard deviation of `R_k = sigma_o² I`.
    pub sigma_o: f64,
    /// Standard deviation of the noise actually added when synthesising.
    pub noise_std: f64,
    pub seed: u64,
}

impl ObservationSet {
    pub fn empty(sigma_o: f64) -> Self {
        ObservationSet {
            times: Vec::new(),
            locations: Vec::new(),
            values: Vec::new(),
            sigma_o,
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    /// Position of level `k` in `times`.
    pub fn find(&self, k: usize) -> Option<usize> {
        self.times.iter().position(|&t| t == k)
    }

    pub fn operator(&self, grid: &SpaceTimeGrid, slot: usize) -> ObservationOperator {
        ObservationOperator::new(grid, &self.locations[slot])
    }

    /// Checks shapes, index bounds and `sigma_o > 0`.
    pub fn validate(&self, grid: &SpaceTimeGrid) -> Result<()> {
        if !(self.sigma_o.is_finite() && self.sigma_o > 0.0) {
            return Err(DdvarError::config(
                "assimilation.sigma_o",
                format!(
                    "observation error std must be positive, got {}",
                    self.sigma_o
                ),
            ));
        }
        if self.locations.len() != self.times.len() || self.values.len() != self.times.len() {
            return Err(DdvarError::Dimension(
                "observation times, locations and values differ in length".into(),
            ));
        }
        for (s, &t) in self.times.iter().enumerate() {
            if t >= grid.nt {
                return Err(DdvarError::Dimension(format!(
                    "observation time {t} outside a window of {} levels",
                    grid.nt
                )));
            }
            if self.times[..s].contains(&t) {
                return Err(DdvarError::Dimension(format!(
                    "observation time {t} listed twice"
                )));
            }
            if self.locations[s].len() != self.values[s].len() {
                return Err(DdvarError::Dimension(format!(
                    "time {t}: {} locations but {} values",
                    self.locations[s].len(),
                    self.values[s].len()
                )));
            }
            if let Some(bad) = self.locations[s]
                .iter()
                .find(|&&[i, j, v]| i >= grid.nlon || j >= grid.nlat || v >= NVARS)
            {
                return Err(DdvarError::Dimension(format!(
                    "time {t}: location {bad:?} outside the grid"
                )));
            }
        }
        Ok(())
    }

    /// A notice when some time carries more than a quarter of the state.
    pub fn density_warning(&self, grid: &SpaceTimeGrid) -> Option<String> {
        let k = grid.state_len();
        let worst = self.locations.iter().map(Vec::len).max().unwrap_or(0);
        (4 * worst > k).then(|| {
            format!(
                "dense observations: {worst} values at one time for a state of {k} (more than K/4)"
            )
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Samples `truth` on `layout` and adds `N(0, noise_std²)` noise from the
/// observation-noise substream.
pub fn synth_observations(
    truth: &Trajectory,
    layout: &ObservationLayout,
    sigma_o: f64,
    noise_std: f64,
    seed: u64,
) -> Result<ObservationSet> {
    let grid = &truth.grid;
    let mut rng = substream(seed, OBSERVATION_NOISE);
    let mut values = Vec::with_capacity(layout.times.len());
    for (s, &t) in layout.times.iter().enumerate() {
        let state = truth.states.get(t).ok_or_else(|| {
            DdvarError::Dimension(format!(
                "observation time {t} beyond a trajectory of {} levels",
                truth.len()
            ))
        })?;
        let op = ObservationOperator::new(grid, &layout.locations[s]);
        let mut v = op.apply(&state.data);
        if noise_std > 0.0 {
            for x in v.iter_mut() {
                let eta: f64 = StandardNormal.sample(&mut rng);
                *x += noise_std * eta;
            }
        }
        values.push(v);
    }
    let obs = ObservationSet {
        times: layout.times.clone(),
        locations: layout.locations.clone(),
        values,
        sigma_o,
        noise_std,
        seed,
    };
    obs.validate(grid)?;
    Ok(obs)
}

/// `d_k = v_k − H^(k)(z_k)`, empty when level `k` carries no observations.
/// `traj` starts at level `first`.
pub fn misfit(k: usize, traj: &Trajectory, first: usize, obs: &ObservationSet) -> Vec<f64> {
    let Some(slot) = obs.find(k) else {
        return Vec::new();
    };
    let op = obs.operator(&traj.grid, slot);
    let hz = op.apply(&traj.states[k - first].data);
    obs.values[slot]
        .iter()
        .zip(hz)
        .map(|(v, h)| v - h)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swe::{propagate, SweParams, SweState};

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::uniform(8, 8, 5, 600.0).unwrap()
    }

    #[test]
    fn layout_skips_boundary_rows_and_is_seeded() {
        let g = grid();
        let spec = LayoutSpec {
            fraction: 0.5,
            ..Default::default()
        };
        let a = ObservationLayout::generate(&g, &spec, 2, 11).unwrap();
        let b = ObservationLayout::generate(&g, &spec, 2, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times, vec![0, 2, 4]);
        assert_eq!(a.locations[0].len(), 3 * 16);
        assert!(a.locations[0].iter().all(|&[_, j, _]| (2..6).contains(&j)));
    }

    #[test]
    fn dense_layout_covers_the_state() {
        let g = grid();
        let l = ObservationLayout::generate(&g, &LayoutSpec::dense(), 2, 0).unwrap();
        assert_eq!(l.times.len(), 5);
        assert_eq!(l.locations[0].len(), g.state_len());
    }

    #[test]
    fn misfit_of_a_single_entry() {
        let g = grid();
        let z = SweState::rest(&g, 5.0);
        let traj = propagate(&z, &SweParams::for_grid(&g), &g, 0).unwrap();
        let obs = ObservationSet {
            times: vec![0],
            locations: vec![vec![[3, 4, 2]]],
            values: vec![vec![0.0]],
            sigma_o: 1.0,
            noise_std: 0.0,
            seed: 0,
        };
        assert_eq!(misfit(0, &traj, 0, &obs), vec![-5.0]);
        assert!(misfit(1, &traj, 0, &obs).is_empty());
    }

    #[test]
    fn out_of_grid_location_is_rejected() {
        let obs = ObservationSet {
            times: vec![0],
            locations: vec![vec![[8, 0, 0]]],
            values: vec![vec![1.0]],
            sigma_o: 1.0,
            noise_std: 0.0,
            seed: 0,
        };
        assert!(obs.validate(&grid()).is_err());
    }
}
