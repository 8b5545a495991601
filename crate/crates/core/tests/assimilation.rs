//! Cost functionals, gradients, observations and covariance factors.

use std::collections::BTreeMap;

use ddvar_core::assimilation::{
    cost_gradient, global_cost, local_cost, misfit, synth_observations, twin_experiment,
    AssimilationSetup, CovarianceFactor, CovarianceKind, CovarianceSpec, LayoutSpec, LocalProblem,
    ObservationLayout, ObservationSet, SampleKind, TwinSpec,
};
use ddvar_core::spacetime::{
    build_decomposition, restrict, DecompositionSpec, RestrictMode, SpaceTimeField, SpaceTimeGrid,
};
use ddvar_core::swe::{propagate, SweParams, SweState};
use ddvar_core::DdvarError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn twin(
    n: usize,
    m: usize,
    layout: LayoutSpec,
    kind: CovarianceKind,
) -> (ddvar_core::assimilation::TwinExperiment, SpaceTimeGrid) {
    let grid = SpaceTimeGrid::uniform(n, n, m, 1800.0).unwrap();
    let params = SweParams::for_grid(&grid);
    let spec = TwinSpec {
        truth: Default::default(),
        covariance: CovarianceSpec {
            kind,
            sigma_b: 1.0,
            length_scale: 1.0,
        },
        layout,
        sigma_o: 0.1,
        noise_std: 0.0,
        lambda: 1.0,
        mu: 1.0,
        seed: 42,
    };
    (twin_experiment(&grid, &params, &spec).unwrap(), grid)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn cost_vanishes_at_a_consistent_background() {
    let (mut tw, grid) = twin(8, 4, LayoutSpec::default(), CovarianceKind::Diagonal);
    let bg = tw.setup.background.clone();
    let traj = propagate(&bg, &tw.setup.params, &grid, grid.nt - 1).unwrap();
    let layout = ObservationLayout {
        times: tw.setup.obs.times.clone(),
        locations: tw.setup.obs.locations.clone(),
    };
    tw.setup.obs = synth_observations(&traj, &layout, 0.1, 0.0, 1).unwrap();
    let c = global_cost(&bg, &tw.setup).unwrap();
    assert_eq!(c.total, 0.0);
    assert_eq!(c.overlap, 0.0);
}

#[test]
fn background_term_only_without_observations() {
    let (mut tw, _) = twin(8, 3, LayoutSpec::default(), CovarianceKind::Diagonal);
    tw.setup.obs = ObservationSet::empty(1.0);
    let mut u = tw.setup.background.clone();
    u.data
        .iter_mut()
        .enumerate()
        .for_each(|(k, v)| *v += (k % 5) as f64 * 0.1);
    let expected: f64 = u
        .data
        .iter()
        .zip(&tw.setup.background.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let c = global_cost(&u, &tw.setup).unwrap();
    assert!((c.total - expected).abs() <= 1e-12 * expected);
    assert_eq!(c.observation, 0.0);
}

#[test]
fn single_observation_term_by_hand() {
    // 3×3 grid, one level, one observation of h at (1, 1) off by d = 2.5.
    let grid = SpaceTimeGrid::uniform(3, 3, 1, 600.0).unwrap();
    let params = SweParams::for_grid(&grid);
    let bg = SweState::rest(&grid, 100.0);
    let sigma = 0.5;
    let setup = AssimilationSetup {
        grid,
        params,
        background: bg.clone(),
        factor: CovarianceFactor::global(&grid, &CovarianceSpec::default()).unwrap(),
        obs: ObservationSet {
            times: vec![0],
            locations: vec![vec![[1, 1, 2]]],
            values: vec![vec![102.5]],
            sigma_o: sigma,
            noise_std: 0.0,
            seed: 0,
        },
        lambda: 1.0,
        mu: 1.0,
    };
    let c = global_cost(&bg, &setup).unwrap();
    assert_eq!(c.observation, 2.5 * 2.5 / (sigma * sigma));
    assert_eq!(c.total, c.observation);
}

#[test]
fn single_subdomain_local_cost_equals_global() {
    let (tw, grid) = twin(
        8,
        4,
        LayoutSpec {
            fraction: 0.3,
            ..Default::default()
        },
        CovarianceKind::Gaussian,
    );
    let dec = build_decomposition(&grid, &DecompositionSpec::single()).unwrap();
    let sub = &dec.subdomains[0];
    let p = LocalProblem::for_subdomain(
        &tw.setup,
        &dec,
        sub,
        tw.setup.background.clone(),
        tw.setup.background.data.clone(),
        &BTreeMap::new(),
    )
    .unwrap();
    let u = tw.truth.states[0].clone();
    assert_eq!(
        local_cost(&u.data, &p).unwrap(),
        global_cost(&u, &tw.setup).unwrap()
    );
}

fn two_way_split() -> (
    ddvar_core::assimilation::TwinExperiment,
    ddvar_core::spacetime::Decomposition,
) {
    let (tw, grid) = twin(
        8,
        4,
        LayoutSpec {
            fraction: 0.5,
            ..Default::default()
        },
        CovarianceKind::Diagonal,
    );
    let dec = build_decomposition(
        &grid,
        &DecompositionSpec {
            q: 2,
            p1: 2,
            p2: 1,
            o_x: 1,
            o_y: 0,
            o_t: 1,
        },
    )
    .unwrap();
    (tw, dec)
}

/// Builds the local problem of `id` with every neighbour reporting the
/// restriction of `field`.
fn consistent_problem(
    tw: &ddvar_core::assimilation::TwinExperiment,
    dec: &ddvar_core::spacetime::Decomposition,
    field: &SpaceTimeField,
    id: usize,
) -> LocalProblem {
    let sub = &dec.subdomains[id];
    let mut tables = BTreeMap::new();
    for nb in dec.neighbors(id) {
        let region = ddvar_core::spacetime::overlap_region(sub, &dec.subdomains[nb]);
        let local = restrict(field, &dec.subdomains[nb], RestrictMode::Plain);
        tables.insert(nb, region.gather(&local).unwrap());
    }
    let start = sub.first_level();
    let exterior = SweState::from_vec(&dec.grid, field.level(start).to_vec());
    let anchor = restrict(field, sub, RestrictMode::Plain).level(0).to_vec();
    LocalProblem::for_subdomain(&tw.setup, dec, sub, exterior, anchor, &tables).unwrap()
}

fn truth_field(tw: &ddvar_core::assimilation::TwinExperiment) -> SpaceTimeField {
    let levels: Vec<&[f64]> = tw.truth.states.iter().map(|s| s.data.as_slice()).collect();
    SpaceTimeField::from_levels(&tw.truth.grid, &levels).unwrap()
}

#[test]
fn agreeing_neighbours_give_zero_overlap_term() {
    let (tw, dec) = two_way_split();
    let field = truth_field(&tw);
    for id in 0..dec.len() {
        let p = consistent_problem(&tw, &dec, &field, id);
        assert!(p.samples.iter().any(|s| s.kind == SampleKind::Overlap));
        let x = p.background.clone();
        assert_eq!(local_cost(&x, &p).unwrap().overlap, 0.0, "subdomain {id}");
    }
}

#[test]
fn missing_neighbour_is_a_protocol_error() {
    let (tw, dec) = two_way_split();
    let sub = &dec.subdomains[0];
    let err = LocalProblem::for_subdomain(
        &tw.setup,
        &dec,
        sub,
        tw.setup.background.clone(),
        vec![0.0; sub.control_len()],
        &BTreeMap::new(),
    )
    .unwrap_err();
    assert!(matches!(err, DdvarError::Protocol(_)), "{err}");
}

#[test]
fn zero_mu_matches_direct_restricted_functional() {
    let (mut tw, dec) = two_way_split();
    tw.setup.mu = 0.0;
    let field = truth_field(&tw);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for id in 0..dec.len() {
        let sub = &dec.subdomains[id];
        let p = consistent_problem(&tw, &dec, &field, id);
        let x: Vec<f64> = p
            .background
            .iter()
            .map(|b| b + rng.random_range(-0.5..0.5))
            .collect();

        // Direct evaluation: compose, run the full model from the window
        // start, restrict observations to the window and region.
        let mut z = SweState::from_vec(&dec.grid, field.level(sub.first_level()).to_vec());
        let mut k = 0;
        for var in 0..3 {
            for &j in &sub.lats {
                for &i in &sub.lons {
                    z.data[dec.grid.index(var, j, i)] = x[k];
                    k += 1;
                }
            }
        }
        let traj = propagate(&z, &tw.setup.params, &dec.grid, sub.levels.len() - 1).unwrap();
        let bg: f64 = x
            .iter()
            .zip(&p.background)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let mut obs = 0.0;
        for (slot, &t) in tw.setup.obs.times.iter().enumerate() {
            if !sub.levels.contains(&t) {
                continue;
            }
            for (&[i, j, var], &v) in tw.setup.obs.locations[slot]
                .iter()
                .zip(&tw.setup.obs.values[slot])
            {
                if sub.lons.contains(&i) && sub.lats.contains(&j) {
                    let d = v - traj.states[t - sub.first_level()].data[dec.grid.index(var, j, i)];
                    obs += d * d / (0.1 * 0.1);
                }
            }
        }
        let c = local_cost(&x, &p).unwrap();
        let expected = bg + obs;
        assert!(
            (c.total - expected).abs() <= 1e-12 * expected,
            "{} vs {expected}",
            c.total
        );
    }
}

#[test]
fn weighted_local_observation_terms_sum_to_global() {
    let (tw, grid) = twin(
        8,
        4,
        LayoutSpec {
            fraction: 0.6,
            every: 1,
            ..Default::default()
        },
        CovarianceKind::Diagonal,
    );
    let dec = build_decomposition(
        &grid,
        &DecompositionSpec {
            q: 2,
            p1: 2,
            p2: 2,
            o_x: 1,
            o_y: 1,
            o_t: 1,
        },
    )
    .unwrap();
    // Observation values differ from the truth so every misfit is nonzero.
    let mut setup = tw.setup.clone();
    setup
        .obs
        .values
        .iter_mut()
        .flatten()
        .for_each(|v| *v += 0.37);
    let field = truth_field(&tw);
    let global = global_cost(&tw.truth.states[0], &setup)
        .unwrap()
        .observation;
    let mut total = 0.0;
    for sub in &dec.subdomains {
        let tw2 = ddvar_core::assimilation::TwinExperiment {
            truth: tw.truth.clone(),
            setup: setup.clone(),
        };
        let p = consistent_problem(&tw2, &dec, &field, sub.id);
        let traj = p.trajectory(&p.background).unwrap();
        for (s, d) in p.samples.iter().zip(p.residuals(&traj)) {
            if s.kind != SampleKind::Observation {
                continue;
            }
            let var_lat_lon = s.index;
            let j = (var_lat_lon / grid.nlon) % grid.nlat;
            let i = var_lat_lon % grid.nlon;
            let lt = s.level;
            let ly = sub.lats.iter().position(|&v| v == j).unwrap();
            let lx = sub.lons.iter().position(|&v| v == i).unwrap();
            total += sub.weight(lt, ly, lx) * d * d / (0.1 * 0.1);
        }
    }
    assert!(
        (total - global).abs() <= 1e-10 * global,
        "{total} vs {global}"
    );
}

#[test]
fn misfit_matches_dense_selection_matrix() {
    let (tw, grid) = twin(
        6,
        3,
        LayoutSpec {
            fraction: 0.5,
            every: 1,
            exclude_boundary_rows: false,
            variables: vec![0, 2],
        },
        CovarianceKind::Diagonal,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut obs = tw.setup.obs.clone();
    obs.values
        .iter_mut()
        .flatten()
        .for_each(|v| *v += rng.random_range(-1.0..1.0));
    let n = grid.state_len();
    for (slot, &t) in obs.times.iter().enumerate() {
        let locs = &obs.locations[slot];
        let mut h = nalgebra::DMatrix::<f64>::zeros(locs.len(), n);
        for (r, &[i, j, var]) in locs.iter().enumerate() {
            h[(r, grid.index(var, j, i))] = 1.0;
        }
        let z = nalgebra::DVector::from_column_slice(&tw.truth.states[t].data);
        let v = nalgebra::DVector::from_column_slice(&obs.values[slot]);
        let expected = v - h * z;
        let got = misfit(t, &tw.truth, 0, &obs);
        assert_eq!(got.len(), expected.len());
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn gradient_vanishes_at_noise_free_truth() {
    let (mut tw, _) = twin(8, 4, LayoutSpec::default(), CovarianceKind::Diagonal);
    tw.setup.background = tw.truth.states[0].clone();
    let g = cost_gradient(&tw.truth.states[0], &tw.setup).unwrap();
    assert!(g.data.iter().all(|v| v.abs() < 1e-9), "{}", g.max_abs());
}

#[test]
fn gradient_without_observations_is_scaled_difference() {
    let (mut tw, _) = twin(8, 3, LayoutSpec::default(), CovarianceKind::Diagonal);
    tw.setup.obs = ObservationSet::empty(1.0);
    let u = tw.truth.states[0].clone();
    let g = cost_gradient(&u, &tw.setup).unwrap();
    for ((gk, uk), bk) in g.data.iter().zip(&u.data).zip(&tw.setup.background.data) {
        assert!((gk - 2.0 * (uk - bk)).abs() <= 1e-12 * (1.0 + gk.abs()));
    }
}

fn fd_relative_error(kind: CovarianceKind) -> f64 {
    let (tw, grid) = twin(
        8,
        4,
        LayoutSpec {
            fraction: 0.4,
            every: 1,
            ..Default::default()
        },
        kind,
    );
    let u = tw.setup.background.clone();
    let g = cost_gradient(&u, &tw.setup).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = grid.points();
    let delta: Vec<f64> = (0..3 * n)
        .map(|k| rng.random_range(-1.0..1.0) * if k < 2 * n { 1.0 } else { 10.0 })
        .collect();
    let dir = dot(&g.data, &delta);
    let eval = |s: f64| {
        let mut z = u.clone();
        z.data.iter_mut().zip(&delta).for_each(|(a, d)| *a += s * d);
        global_cost(&z, &tw.setup).unwrap().total
    };
    let scale = 1.0;
    [1e-3, 1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&e| {
            let eps = e * scale;
            let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            (fd - dir).abs() / dir.abs()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn gradient_matches_centred_differences() {
    for kind in [CovarianceKind::Diagonal, CovarianceKind::Gaussian] {
        let err = fd_relative_error(kind);
        println!("{kind:?}: best relative FD error {err:e}");
        assert!(err <= 1e-6, "{kind:?}: {err}");
    }
}

#[test]
fn noise_free_synthesis_samples_the_truth_exactly() {
    let (tw, grid) = twin(8, 4, LayoutSpec::default(), CovarianceKind::Diagonal);
    for (slot, &t) in tw.setup.obs.times.iter().enumerate() {
        for (&[i, j, var], &v) in tw.setup.obs.locations[slot]
            .iter()
            .zip(&tw.setup.obs.values[slot])
        {
            assert_eq!(v, tw.truth.states[t].data[grid.index(var, j, i)]);
        }
    }
}

#[test]
fn synthesis_is_deterministic_per_seed() {
    let (tw, grid) = twin(8, 4, LayoutSpec::default(), CovarianceKind::Diagonal);
    let layout = ObservationLayout::generate(&grid, &LayoutSpec::default(), 2, 5).unwrap();
    let a = synth_observations(&tw.truth, &layout, 1.0, 1.0, 99).unwrap();
    let b = synth_observations(&tw.truth, &layout, 1.0, 1.0, 99).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let back = ObservationSet::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn noise_has_zero_mean() {
    // 10⁵ draws: a dense network on a 64×64 grid over 9 levels.
    let grid = SpaceTimeGrid::uniform(64, 64, 9, 60.0).unwrap();
    let params = SweParams::for_grid(&grid);
    let z = SweState::rest(&grid, 1000.0);
    let truth = propagate(&z, &params, &grid, 8).unwrap();
    let layout = ObservationLayout::generate(
        &grid,
        &LayoutSpec {
            every: 1,
            fraction: 1.0,
            exclude_boundary_rows: false,
            variables: vec![2],
        },
        0,
        0,
    )
    .unwrap();
    let sigma = 2.0;
    let obs = synth_observations(&truth, &layout, sigma, sigma, 1234).unwrap();
    let eta: Vec<f64> = obs.values.iter().flatten().map(|v| v - 1000.0).collect();
    let n = eta.len() as f64;
    assert!(n >= 1e5 - 1.0 || eta.len() == 9 * 4096);
    let mean = eta.iter().sum::<f64>() / n;
    assert!(mean.abs() <= 3.0 * sigma / n.sqrt(), "mean {mean}");
}

#[test]
fn covariance_is_symmetric_positive_definite() {
    let grid = SpaceTimeGrid::uniform(8, 6, 1, 60.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in [CovarianceKind::Diagonal, CovarianceKind::Gaussian] {
        let f = CovarianceFactor::global(
            &grid,
            &CovarianceSpec {
                kind,
                sigma_b: 1.5,
                length_scale: 1.2,
            },
        )
        .unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..f.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..f.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bx = f.b_apply(&x).unwrap();
            let by = f.b_apply(&y).unwrap();
            assert!(dot(&x, &bx) > 0.0);
            let (l, r) = (dot(&x, &by), dot(&bx, &y));
            assert!((l - r).abs() <= 1e-12 * (l.abs() + r.abs()));
        }
    }
}

#[test]
fn restricted_factor_is_a_principal_submatrix() {
    let grid = SpaceTimeGrid::uniform(8, 6, 1, 60.0).unwrap();
    let spec = CovarianceSpec {
        kind: CovarianceKind::Gaussian,
        sigma_b: 1.0,
        length_scale: 1.0,
    };
    let full = CovarianceFactor::global(&grid, &spec).unwrap();
    let lons = [6, 7, 0, 1];
    let lats = [2, 3, 4];
    let sub = full.restrict(&lons, &lats).unwrap();
    // V_sub e_k equals the global V e_k sampled on the sub-index set.
    for k in 0..sub.len() {
        let mut e = vec![0.0; sub.len()];
        e[k] = 1.0;
        let local = sub.apply(&e).unwrap();
        let (var, rest) = (k / 12, k % 12);
        let (ly, lx) = (rest / 4, rest % 4);
        let mut eg = vec![0.0; full.len()];
        eg[grid.index(var, lats[ly], lons[lx])] = 1.0;
        let global = full.apply(&eg).unwrap();
        let mut m = 0;
        for v in 0..3 {
            for &j in &lats {
                for &i in &lons {
                    assert!((local[m] - global[grid.index(v, j, i)]).abs() < 1e-15);
                    m += 1;
                }
            }
        }
    }
}
