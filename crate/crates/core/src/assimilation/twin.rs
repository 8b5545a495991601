//! Synthetic twin experiments: a model-generated truth, a perturbed
//! background and observations sampled from the truth.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::covariance::{CovarianceFactor, CovarianceSpec};
use super::observations::{synth_observations, LayoutSpec, ObservationLayout};
use super::problem::AssimilationSetup;
use crate::error::Result;
use crate::rng::{substream, TRUTH_PERTURBATION};
use crate::spacetime::SpaceTimeGrid;
use crate::swe::cases::{add_gaussian_hill, balanced_zonal_flow};
use crate::swe::{propagate, SweParams, SweState, Trajectory};

/// Truth initial condition: balanced zonal flow plus a height anomaly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthSpec {
    pub u0: f64,
    pub h0: f64,
    pub hill_amplitude: f64,
    pub hill_lon: f64,
    pub hill_lat: f64,
    pub hill_radius: f64,
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec {
            u0: 20.0,
            h0: 3000.0,
            hill_amplitude: 150.0,
            hill_lon: 1.0,
            hill_lat: 0.3,
            hill_radius: 0.6,
        }
    }
}

pub fn truth_initial_state(grid: &SpaceTimeGrid, params: &SweParams, spec: &TruthSpec) -> SweState {
    let mut z = balanced_zonal_flow(grid, params, spec.u0, spec.h0);
    add_gaussian_hill(
        &mut z,
        grid,
        spec.hill_lon,
        spec.hill_lat,
        spec.hill_radius,
        spec.hill_amplitude,
    );
    z
}

/// `truth + V ξ` with `ξ ~ N(0, I)` from the truth-perturbation substream,
/// so the background error has covariance `B`.
pub fn perturb_background(
    truth0: &SweState,
    factor: &CovarianceFactor,
    seed: u64,
) -> Result<SweState> {
    let mut rng = substream(seed, TRUTH_PERTURBATION);
    let xi: Vec<f64> = (0..truth0.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let dz = factor.apply(&xi)?;
    let mut z = truth0.clone();
    z.data.iter_mut().zip(dz).for_each(|(a, d)| *a += d);
    Ok(z)
}

/// Everything that defines a twin experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinSpec {
    pub truth: TruthSpec,
    pub covariance: CovarianceSpec,
    pub layout: LayoutSpec,
    pub sigma_o: f64,
    pub noise_std: f64,
    pub lambda: f64,
    pub mu: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TwinExperiment {
    pub truth: Trajectory,
    pub setup: AssimilationSetup,
}

pub fn twin_experiment(
    grid: &SpaceTimeGrid,
    params: &SweParams,
    spec: &TwinSpec,
) -> Result<TwinExperiment> {
    let z0 = truth_initial_state(grid, params, &spec.truth);
    let truth = propagate(&z0, params, grid, grid.nt - 1).map_err(|e| e.context("truth run"))?;
    let factor = CovarianceFactor::global(grid, &spec.covariance)?;
    let background = perturb_background(&z0, &factor, spec.seed)?;
    let layout = ObservationLayout::generate(grid, &spec.layout, params.q_tz, spec.seed)?;
    let obs = synth_observations(&truth, &layout, spec.sigma_o, spec.noise_std, spec.seed)?;
    let setup = AssimilationSetup {
        grid: *grid,
        params: *params,
        background,
        factor,
        obs,
        lambda: spec.lambda,
        mu: spec.mu,
    };
    setup.validate()?;
    Ok(TwinExperiment { truth, setup })
}

/// Root-mean-square difference of two equally shaped vectors.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(1) as f64;
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt()
}
