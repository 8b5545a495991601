//! Observations, background covariances and the global and local 4D-Var
//! functionals.

mod covariance;
mod observations;
mod problem;
mod twin;

pub use covariance::{CovarianceFactor, CovarianceKind, CovarianceSpec};
pub use observations::{
    misfit, synth_observations, LayoutSpec, ObservationLayout, ObservationOperator, ObservationSet,
};
pub use problem::{
    cost_gradient, global_cost, local_cost, AssimilationSetup, CostBreakdown, LocalProblem, Sample,
    SampleKind,
};
pub use twin::{
    perturb_background, rmse, truth_initial_state, twin_experiment, TruthSpec, TwinExperiment,
    TwinSpec,
};
