//! Domain-decomposition driver and the undecomposed oracle.
//!
//! A run propagates the background over the whole window, then repeats
//! additive-Schwarz rounds: every subdomain minimises its local functional
//! with neighbour overlap values frozen from the previous round, after
//! which all iterates are exchanged at once. Round `l + 1` reads only
//! round-`l` values, so the result does not depend on worker scheduling.
//!
//! Per round, subdomain `(j, i1, i2)` is set up as follows:
//!
//! * anchor: the background at the window start in round 1; afterwards,
//!   for `j > 0`, the previous-round iterate of `(j − 1, i1, i2)` at this
//!   window's first level (the temporal predictor). `j = 0` always anchors
//!   on the true background.
//! * exterior: the previous round's weighted reconstruction at the window
//!   start, supplying values outside the halo-inclusive region.
//! * overlap targets: each neighbour's previous-round iterate on the shared
//!   region.
//!
//! A subdomain whose inputs did not change since a converged solve keeps
//! its iterate, which makes the single-subdomain run stop after one
//! confirming round.

mod driver;
mod history;

use serde::{Deserialize, Serialize};

use crate::assimilation::CostBreakdown;
use crate::error::{DdvarError, Result};
use crate::solver::{ExchangeEvery, GnConfig};
use crate::spacetime::{DecompositionSpec, SpaceTimeField};
use crate::swe::SweState;

pub use driver::{exchange_overlaps, run_dd, run_global, OverlapTable};
pub use history::{convergence_history, ConvergenceTable};

/// Driver settings. Round-to-round changes are measured in the max norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdRunConfig {
    pub decomposition: DecompositionSpec,
    pub solver: GnConfig,
    /// Stop when the largest change of any local field falls below
    /// `eps · ‖u0_b‖∞`.
    pub eps: f64,
    pub max_exchange_rounds: usize,
    pub exchange_every: ExchangeEvery,
    /// Worker threads for the local solves. Results do not depend on it,
    /// so it is left out of serialized reports.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for DdRunConfig {
    fn default() -> Self {
        DdRunConfig {
            decomposition: DecompositionSpec::single(),
            solver: GnConfig::default(),
            eps: 1e-6,
            max_exchange_rounds: 50,
            exchange_every: ExchangeEvery::OuterRound,
            workers: 1,
        }
    }
}

impl DdRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(DdvarError::config(
                "solver.eps",
                format!("must be positive, got {}", self.eps),
            ));
        }
        if self.max_exchange_rounds == 0 {
            return Err(DdvarError::config(
                "solver.max_exchange_rounds",
                "must be at least 1",
            ));
        }
        if self.workers == 0 {
            return Err(DdvarError::config("solver.workers", "must be at least 1"));
        }
        Ok(())
    }
}

/// One subdomain's share of an exchange round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainRound {
    pub id: usize,
    /// False when the inputs were unchanged and the iterate was kept.
    pub solved: bool,
    pub outer_iterations: usize,
    pub max_inner: usize,
    pub converged: bool,
    /// Local cost at the start and after every accepted step.
    pub costs: Vec<f64>,
    /// `‖u^l − u^{l−1}‖∞` over the local field.
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based; round 0 is the background.
    pub round: usize,
    pub max_change: f64,
    /// Global functional at the reconstructed initial state.
    pub cost: f64,
    pub subdomains: Vec<SubdomainRound>,
}

/// Outcome of the final argmin over per-subdomain candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct Gather {
    /// Id of the winning subdomain (lowest id on ties).
    pub winner: usize,
    /// `(j, i1, i2)` of the winner.
    pub winner_index: (usize, usize, usize),
    /// Global functional of each candidate, by subdomain id.
    pub candidate_costs: Vec<f64>,
    pub cost: CostBreakdown,
    pub state: SweState,
}

/// Iteration bookkeeping: `ρ_ji = m_ji · l_ji` with `m` the largest inner
/// iteration count of any solve and `l` the accepted Gauss-Newton steps
/// summed over rounds. The run value is `max m · max l`, which for a single
/// subdomain is the undecomposed `ρ^G`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationCounts {
    pub max_inner: Vec<usize>,
    pub outer_steps: Vec<usize>,
    pub rho: Vec<usize>,
    pub rho_run: usize,
}

/// Wall-clock seconds per phase. Kept out of the deterministic report.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub background: f64,
    pub local_solve: f64,
    pub exchange: f64,
    pub gather: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub config: DdRunConfig,
    pub subdomain_count: usize,
    /// Level-0 slice of the weighted reconstruction.
    pub analysis: SweState,
    /// Weighted reconstruction over the whole window.
    pub field: SpaceTimeField,
    pub analysis_cost: CostBreakdown,
    pub background_cost: CostBreakdown,
    pub gather: Gather,
    /// `‖analysis − gather winner‖∞`.
    pub gather_divergence: f64,
    pub rounds: Vec<RoundRecord>,
    pub converged: bool,
    pub iterations: IterationCounts,
    pub history: Option<ConvergenceTable>,
    pub notices: Vec<String>,
    pub timings: PhaseTimings,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    config: &'a DdRunConfig,
    subdomain_count: usize,
    converged: bool,
    rounds_run: usize,
    background_cost: CostBreakdown,
    analysis_cost: CostBreakdown,
    gather_winner: usize,
    gather_winner_index: [usize; 3],
    gather_cost: CostBreakdown,
    gather_candidate_costs: &'a [f64],
    gather_divergence: f64,
    iterations: &'a IterationCounts,
    rounds: &'a [RoundRecord],
    history: Option<&'a ConvergenceTable>,
    notices: &'a [String],
}

impl AnalysisReport {
    pub fn rounds_run(&self) -> usize {
        self.rounds.len()
    }

    /// Everything except timings and the state arrays, as pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        let (j, i1, i2) = self.gather.winner_index;
        let doc = ReportDoc {
            config: &self.config,
            subdomain_count: self.subdomain_count,
            converged: self.converged,
            rounds_run: self.rounds_run(),
            background_cost: self.background_cost,
            analysis_cost: self.analysis_cost,
            gather_winner: self.gather.winner,
            gather_winner_index: [j, i1, i2],
            gather_cost: self.gather.cost,
            gather_candidate_costs: &self.gather.candidate_costs,
            gather_divergence: self.gather_divergence,
            iterations: &self.iterations,
            rounds: &self.rounds,
            history: self.history.as_ref(),
            notices: &self.notices,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn timings_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.timings)?)
    }

    /// One row per round and subdomain.
    pub fn rounds_csv(&self) -> String {
        let mut out = String::from("round,subdomain,solved,outer_iterations,max_inner,converged,cost_start,cost_end,change\n");
        for r in &self.rounds {
            for s in &r.subdomains {
                let first = s.costs.first().copied().unwrap_or(f64::NAN);
                let last = s.costs.last().copied().unwrap_or(f64::NAN);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{:e},{:e},{:e}\n",
                    r.round,
                    s.id,
                    s.solved,
                    s.outer_iterations,
                    s.max_inner,
                    s.converged,
                    first,
                    last,
                    s.change
                ));
            }
        }
        out
    }

    /// Global cost of the reconstruction per round; round 0 is the background.
    pub fn cost_history_csv(&self) -> String {
        let mut out = String::from("round,cost,max_change\n");
        out.push_str(&format!("0,{:e},\n", self.background_cost.total));
        for r in &self.rounds {
            out.push_str(&format!("{},{:e},{:e}\n", r.round, r.cost, r.max_change));
        }
        out
    }
}
