use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use super::{
    AnalysisReport, ConvergenceTable, DdRunConfig, Gather, IterationCounts, PhaseTimings,
    RoundRecord, SubdomainRound,
};
use crate::assimilation::{global_cost, AssimilationSetup, LocalProblem};
use crate::error::{DdvarError, Result};
use crate::solver::{gauss_newton, ExchangeEvery, GnOutcome};
use crate::spacetime::{
    build_decomposition, overlap_region, reconstruct, restrict, Decomposition, DecompositionSpec,
    LocalField, RestrictMode, SpaceTimeField, Subdomain,
};
use crate::swe::{propagate, SweState};

/// Neighbour id to that neighbour's values on the shared overlap region.
pub type OverlapTable = BTreeMap<usize, Vec<f64>>;

/// For every subdomain, the plain restriction of each neighbour's iterate
/// to their common overlap region.
pub fn exchange_overlaps(
    iterates: &[LocalField],
    dec: &Decomposition,
) -> Result<Vec<OverlapTable>> {
    if iterates.len() != dec.len() {
        return Err(DdvarError::Dimension(format!(
            "{} iterates for {} subdomains",
            iterates.len(),
            dec.len()
        )));
    }
    dec.subdomains
        .iter()
        .map(|sub| {
            let mut table = OverlapTable::new();
            for nb in dec.neighbors(sub.id) {
                let region = overlap_region(sub, &dec.subdomains[nb]);
                table.insert(nb, region.gather(&iterates[nb])?);
            }
            Ok(table)
        })
        .collect()
}

/// Everything a local solve reads besides the fixed setup.
#[derive(Debug, Clone, PartialEq)]
struct SolveInputs {
    /// Window-start state with the region zeroed.
    exterior: SweState,
    anchor: Vec<f64>,
    table: OverlapTable,
}

struct LocalSolve {
    outcome: GnOutcome,
    field: LocalField,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn trajectory_field(setup: &AssimilationSetup, z0: &SweState) -> Result<SpaceTimeField> {
    let traj = propagate(z0, &setup.params, &setup.grid, setup.grid.nt - 1)?;
    let levels: Vec<&[f64]> = traj.states.iter().map(|s| s.data.as_slice()).collect();
    SpaceTimeField::from_levels(&setup.grid, &levels)
}

fn write_region(z: &mut SweState, sub: &Subdomain, values: &[f64], setup: &AssimilationSetup) {
    let mut it = values.iter();
    for var in 0..crate::spacetime::NVARS {
        for &j in &sub.lats {
            for &i in &sub.lons {
                z.data[setup.grid.index(var, j, i)] = *it.next().expect("control-sized values");
            }
        }
    }
}

fn level_position(local: &LocalField, t: usize) -> usize {
    local
        .levels
        .iter()
        .position(|&k| k == t)
        .expect("temporal neighbours share the halo level")
}

fn inputs_for(
    setup: &AssimilationSetup,
    dec: &Decomposition,
    sub: &Subdomain,
    iterates: &[LocalField],
    recon: &SpaceTimeField,
    tables: &[OverlapTable],
) -> SolveInputs {
    let start = sub.first_level();
    let mut exterior = SweState::from_vec(&setup.grid, recon.level(start).to_vec());
    write_region(&mut exterior, sub, &vec![0.0; sub.control_len()], setup);
    let anchor = if sub.j == 0 {
        restrict_state(&setup.background, sub, setup)
    } else {
        let prev = &iterates[dec.get(sub.j - 1, sub.i1, sub.i2).id];
        prev.level(level_position(prev, start)).to_vec()
    };
    SolveInputs {
        exterior,
        anchor,
        table: tables[sub.id].clone(),
    }
}

fn restrict_state(z: &SweState, sub: &Subdomain, setup: &AssimilationSetup) -> Vec<f64> {
    let mut out = Vec::with_capacity(sub.control_len());
    for var in 0..crate::spacetime::NVARS {
        for &j in &sub.lats {
            for &i in &sub.lons {
                out.push(z.data[setup.grid.index(var, j, i)]);
            }
        }
    }
    out
}

fn solve_local(
    setup: &AssimilationSetup,
    dec: &Decomposition,
    sub: &Subdomain,
    inputs: &SolveInputs,
    warm: &LocalField,
    cfg: &crate::solver::GnConfig,
) -> Result<LocalSolve> {
    let problem = LocalProblem::for_subdomain(
        setup,
        dec,
        sub,
        inputs.exterior.clone(),
        inputs.anchor.clone(),
        &inputs.table,
    )?;
    let outcome = gauss_newton(&problem, warm.level(0).to_vec(), cfg)?;
    let traj = problem.trajectory(&outcome.x)?;
    let field = problem.local_field(&traj);
    Ok(LocalSolve { outcome, field })
}

/// Domain-decomposed minimisation of the functional in `setup`.
///
/// `reference`, when given, is the full-window field against which the
/// per-round errors `E^l` are recorded. Reaching the round limit is not an
/// error: the report is returned with `converged == false`.
pub fn run_dd(
    setup: &AssimilationSetup,
    cfg: &DdRunConfig,
    reference: Option<&SpaceTimeField>,
) -> Result<AnalysisReport> {
    cfg.validate()?;
    setup.validate()?;
    let dec = build_decomposition(&setup.grid, &cfg.decomposition)?;
    if let Some(r) = reference {
        if !r.matches(&setup.grid) {
            return Err(DdvarError::Dimension(
                "reference field does not match the grid".into(),
            ));
        }
    }
    let total_clock = Instant::now();
    let mut timings = PhaseTimings::default();
    let n = dec.len();

    let clock = Instant::now();
    let bg_field = trajectory_field(setup, &setup.background)
        .map_err(|e| e.context("background propagation"))?;
    let background_cost = global_cost(&setup.background, setup)?;
    timings.background = clock.elapsed().as_secs_f64();

    let mut gn = cfg.solver.clone();
    if cfg.exchange_every == ExchangeEvery::EveryGnIteration {
        gn.max_outer = 1;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| DdvarError::config("solver.workers", e.to_string()))?;
    let bg_norm = setup.background.max_abs();
    let threshold = cfg.eps * if bg_norm > 0.0 { bg_norm } else { 1.0 };

    let mut iterates: Vec<LocalField> = dec
        .subdomains
        .iter()
        .map(|s| restrict(&bg_field, s, RestrictMode::Plain))
        .collect();
    let mut recon = bg_field.clone();
    let mut tables = exchange_overlaps(&iterates, &dec)?;
    let mut last_inputs: Vec<Option<SolveInputs>> = vec![None; n];
    let mut last_converged = vec![false; n];
    let mut max_inner = vec![0usize; n];
    let mut outer_steps = vec![0usize; n];
    let errors_of = |iterates: &[LocalField]| -> Option<Vec<f64>> {
        reference.map(|r| {
            dec.subdomains
                .iter()
                .zip(iterates)
                .map(|(s, it)| max_abs_diff(&restrict(r, s, RestrictMode::Plain).data, &it.data))
                .collect()
        })
    };
    let mut errors: Vec<Vec<f64>> = errors_of(&iterates).into_iter().collect();
    let mut rounds = Vec::new();
    let mut converged = false;

    for round in 1..=cfg.max_exchange_rounds {
        let clock = Instant::now();
        let inputs: Vec<SolveInputs> = dec
            .subdomains
            .iter()
            .map(|s| inputs_for(setup, &dec, s, &iterates, &recon, &tables))
            .collect();
        let todo: Vec<bool> = (0..n)
            .map(|id| !(last_converged[id] && last_inputs[id].as_ref() == Some(&inputs[id])))
            .collect();
        let solves: Vec<Option<Result<LocalSolve>>> = pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|id| {
                    todo[id].then(|| {
                        let sub = &dec.subdomains[id];
                        solve_local(setup, &dec, sub, &inputs[id], &iterates[id], &gn).map_err(
                            |e| {
                                e.context(&format!(
                                    "subdomain {id} (j={}, i1={}, i2={}) in round {round}",
                                    sub.j, sub.i1, sub.i2
                                ))
                            },
                        )
                    })
                })
                .collect()
        });
        timings.local_solve += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let mut records = Vec::with_capacity(n);
        let mut max_change = 0.0f64;
        for (id, (solve, inp)) in solves.into_iter().zip(inputs).enumerate() {
            let Some(solve) = solve else {
                records.push(SubdomainRound {
                    id,
                    solved: false,
                    outer_iterations: 0,
                    max_inner: 0,
                    converged: true,
                    costs: Vec::new(),
                    change: 0.0,
                });
                continue;
            };
            let LocalSolve { outcome, field } = solve?;
            let change = max_abs_diff(&field.data, &iterates[id].data);
            max_change = max_change.max(change);
            max_inner[id] = max_inner[id].max(outcome.max_inner());
            outer_steps[id] += outcome.outer_iterations();
            records.push(SubdomainRound {
                id,
                solved: true,
                outer_iterations: outcome.outer_iterations(),
                max_inner: outcome.max_inner(),
                converged: outcome.converged,
                costs: outcome.costs.iter().map(|c| c.total).collect(),
                change,
            });
            last_converged[id] = outcome.converged;
            last_inputs[id] = Some(inp);
            iterates[id] = field;
        }
        tables = exchange_overlaps(&iterates, &dec)?;
        recon = reconstruct(&iterates, &dec)?;
        timings.exchange += clock.elapsed().as_secs_f64();

        let u0 = SweState::from_vec(&setup.grid, recon.level(0).to_vec());
        let cost = global_cost(&u0, setup)?.total;
        rounds.push(RoundRecord {
            round,
            max_change,
            cost,
            subdomains: records,
        });
        errors.extend(errors_of(&iterates));
        if max_change < threshold {
            converged = true;
            break;
        }
    }

    let clock = Instant::now();
    let mut candidate_costs = Vec::with_capacity(n);
    let mut best: Option<(usize, crate::assimilation::CostBreakdown, SweState)> = None;
    for sub in &dec.subdomains {
        let mut z = setup.background.clone();
        if sub.j == 0 {
            write_region(&mut z, sub, iterates[sub.id].level(0), setup);
        }
        let c = global_cost(&z, setup)
            .map_err(|e| e.context(&format!("gather candidate {}", sub.id)))?;
        candidate_costs.push(c.total);
        if best.as_ref().is_none_or(|b| c.total < b.1.total) {
            best = Some((sub.id, c, z));
        }
    }
    let (winner, gather_cost, gather_state) =
        best.expect("a decomposition has at least one subdomain");
    let analysis = SweState::from_vec(&setup.grid, recon.level(0).to_vec());
    let analysis_cost = global_cost(&analysis, setup)?;
    let gather_divergence = max_abs_diff(&analysis.data, &gather_state.data);
    timings.gather = clock.elapsed().as_secs_f64();
    timings.total = total_clock.elapsed().as_secs_f64();

    let rho: Vec<usize> = max_inner
        .iter()
        .zip(&outer_steps)
        .map(|(m, l)| m * l)
        .collect();
    let rho_run = max_inner.iter().max().copied().unwrap_or(0)
        * outer_steps.iter().max().copied().unwrap_or(0);
    let mut notices = Vec::new();
    let history = if reference.is_some() {
        Some(ConvergenceTable::new(errors))
    } else {
        notices.push("no reference field supplied; convergence history omitted".to_string());
        None
    };
    if !converged {
        notices.push(format!(
            "exchange loop stopped at the round limit {} before reaching eps",
            cfg.max_exchange_rounds
        ));
    }
    let w = &dec.subdomains[winner];
    Ok(AnalysisReport {
        config: cfg.clone(),
        subdomain_count: n,
        analysis,
        field: recon,
        analysis_cost,
        background_cost,
        gather: Gather {
            winner,
            winner_index: (w.j, w.i1, w.i2),
            candidate_costs,
            cost: gather_cost,
            state: gather_state,
        },
        gather_divergence,
        rounds,
        converged,
        iterations: IterationCounts {
            max_inner,
            outer_steps,
            rho,
            rho_run,
        },
        history,
        notices,
        timings,
    })
}

/// Gauss-Newton on the undecomposed domain, through the same driver with
/// a single subdomain.
pub fn run_global(
    setup: &AssimilationSetup,
    cfg: &DdRunConfig,
    reference: Option<&SpaceTimeField>,
) -> Result<AnalysisReport> {
    let single = DdRunConfig {
        decomposition: DecompositionSpec::single(),
        ..cfg.clone()
    };
    run_dd(setup, &single, reference)
}
