//! Performance model formulas, reference tables and modeled sweeps.

use std::collections::HashSet;

use ddvar_core::perfmodel::*;
use ddvar_core::spacetime::{build_decomposition, DecompositionSpec, SpaceTimeGrid};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn poly(a: &[f64]) -> ComplexityPoly {
    ComplexityPoly::new(a.to_vec()).unwrap()
}

/// `Sc = T(N) / (QP · T(N_loc))` with `T = P`, straight from the definition.
fn scaleup_by_definition(p: &ComplexityPoly, n_loc: f64, qp: f64) -> f64 {
    let direct = |x: f64| {
        p.coefficients
            .iter()
            .enumerate()
            .map(|(k, a)| a * x.powi(k as i32))
            .sum::<f64>()
    };
    direct(qp * n_loc) / (qp * direct(n_loc))
}

#[test]
fn surface_to_volume_values() {
    assert_eq!(surface_to_volume(4, 8).unwrap(), 0.75);
    assert_eq!(surface_to_volume(1, 1).unwrap(), 4.0);
    assert!(surface_to_volume(0, 3).is_err());
    assert!(surface_to_volume(3, 0).is_err());
}

proptest! {
    #[test]
    fn surface_to_volume_decreases(d_t in 1usize..500, d_s in 1usize..500) {
        let v = surface_to_volume(d_t, d_s).unwrap();
        prop_assert!(surface_to_volume(d_t + 1, d_s).unwrap() < v);
        prop_assert!(surface_to_volume(d_t, d_s + 1).unwrap() < v);
    }

    #[test]
    fn alpha_is_at_most_one(a0 in 0.0f64..10.0, a1 in 0.0f64..10.0, n_loc in 1.0f64..1e5, qp in 1u32..128) {
        let p = poly(&[a0, a1, 1.0]);
        let a = alpha_poly(&p, n_loc, qp as f64);
        prop_assert!(a > 0.0 && a <= 1.0 + 1e-15);
    }
}

#[test]
fn halo_count_matches_surface_to_volume_within_the_corner_term() {
    let grid = SpaceTimeGrid::uniform(8, 8, 8, 60.0).unwrap();
    // (spec, interior subdomain (j, i1, i2), split spatial direction is lon)
    let shapes = [
        (
            DecompositionSpec {
                q: 4,
                p1: 2,
                p2: 1,
                o_x: 1,
                o_y: 0,
                o_t: 1,
            },
            (1, 0, 0),
            true,
        ),
        (
            DecompositionSpec {
                q: 4,
                p1: 4,
                p2: 1,
                o_x: 1,
                o_y: 0,
                o_t: 1,
            },
            (2, 1, 0),
            true,
        ),
        (
            DecompositionSpec {
                q: 4,
                p1: 1,
                p2: 4,
                o_x: 0,
                o_y: 1,
                o_t: 1,
            },
            (1, 0, 1),
            false,
        ),
    ];
    for (spec, (j, i1, i2), lon_split) in shapes {
        let dec = build_decomposition(&grid, &spec).unwrap();
        let sub = dec.get(j, i1, i2);
        // Count by enumerating index triples of the halo-inclusive box.
        let owned: HashSet<(isize, isize, isize)> = iproduct(
            sub.owned_time_range.start..sub.owned_time_range.end,
            sub.owned_lon_range.start..sub.owned_lon_range.end,
            sub.owned_lat_range.start..sub.owned_lat_range.end,
        );
        let all = iproduct(
            sub.time_range.start..sub.time_range.end,
            sub.lon_range.start..sub.lon_range.end,
            sub.lat_range.start..sub.lat_range.end,
        );
        let halo = all.difference(&owned).count();
        let counted = halo as f64 / owned.len() as f64;
        assert_eq!(halo_core_ratio(sub), counted);

        let d_t = sub.owned_time_range.len();
        let (d_s, o_s) = if lon_split {
            (sub.owned_lon_range.len(), spec.o_x)
        } else {
            (sub.owned_lat_range.len(), spec.o_y)
        };
        let sv = surface_to_volume(d_t, d_s).unwrap();
        let band = halo_corner_correction(d_t, d_s, spec.o_t, o_s);
        println!("{spec:?}: counted {counted}, formula {sv}, band {band}");
        assert!((counted - sv).abs() <= band + 1e-15);
    }
}

fn iproduct(
    a: std::ops::Range<isize>,
    b: std::ops::Range<isize>,
    c: std::ops::Range<isize>,
) -> HashSet<(isize, isize, isize)> {
    let mut s = HashSet::new();
    for x in a {
        for y in b.clone() {
            for z in c.clone() {
                s.insert((x, y, z));
            }
        }
    }
    s
}

#[test]
fn monomial_cost_gives_exact_bound() {
    let p = ComplexityPoly::default();
    assert_eq!(p.degree(), 2);
    assert_eq!(alpha_poly(&p, 1234.0, 16.0), 1.0);
    assert_eq!(theoretical_scaleup(1.0, 1.0, 100.0, 4.0, &p), 4.0);
    for (rg, rdd, qp) in [(10.0, 4.0, 8.0), (3.0, 7.0, 64.0), (1.0, 1.0, 2.0)] {
        assert_eq!(theoretical_scaleup(rg, rdd, 500.0, qp, &p), (rg / rdd) * qp);
    }
    let cubic = poly(&[0.0, 0.0, 0.0, 2.5]);
    assert_eq!(theoretical_scaleup(2.0, 1.0, 10.0, 4.0, &cubic), 2.0 * 16.0);
}

#[test]
fn bound_equals_the_definition_for_polynomial_cost() {
    for a in [[1.0, 1.0, 1.0], [5.0, 0.0, 2.0], [0.0, 3.0, 0.5]] {
        let p = poly(&a);
        for n_loc in [10.0, 1e3, 1e5] {
            for qp in [2.0, 4.0, 64.0] {
                let got = theoretical_scaleup(1.0, 1.0, n_loc, qp, &p);
                let want = scaleup_by_definition(&p, n_loc, qp);
                assert!(
                    (got - want).abs() <= 1e-12 * want,
                    "{a:?} {n_loc} {qp}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn alpha_tends_to_one_for_large_subdomains() {
    let p = poly(&[1.0, 1.0, 1.0]);
    for qp in [2.0, 8.0, 64.0] {
        let a = alpha_poly(&p, 1e6, qp);
        assert!(a >= 0.999, "{a}");
        assert!(a <= 1.0);
    }
}

#[test]
fn measured_scaleup_substitutions() {
    let qp = 8.0;
    let t_loc = 0.37;
    assert_eq!(measured_scaleup(qp * qp * t_loc, t_loc, 0.0, qp, false), qp);
    let lit = measured_scaleup(qp * qp * t_loc, t_loc, 0.1, qp, true);
    assert!(lit < 1.0 / qp);
}

#[test]
fn alpha_measured_flags_and_brackets() {
    assert_eq!(alpha_measured(1.0, 0.0).value, 1.0);
    assert!(!alpha_measured(0.5, 0.0).in_model);
    assert!(!alpha_measured(4.0, 0.8).in_model);
    assert_eq!(alpha_measured(4.0, 0.8).value, 4.0 / (1.0 + 3.2));

    // s in (1, QP], sv in (0, 1 − 1/s): Sc < α·Sc < QP·Sc.
    let qp = 16.0;
    let sc = 3.7;
    let mut checked = 0;
    for i in 0..20 {
        let s = 1.0 + (qp - 1.0) * (i + 1) as f64 / 20.0;
        for k in 0..10 {
            let sv = (1.0 - 1.0 / s) * (k as f64 + 0.5) / 10.0;
            let a = alpha_measured(s, sv);
            assert!(a.in_model);
            let meas = a.value * sc;
            assert!(sc < meas && meas < qp * sc, "s {s} sv {sv}: {meas}");
            checked += 1;
        }
    }
    assert_eq!(checked, 200);
}

#[test]
fn memory_fit_reproduces_the_reference_table() {
    let fit = MemoryFit::reference();
    assert_eq!(REFERENCE_MEMORY_MB[0], (32, 177.0));
    assert_eq!(REFERENCE_MEMORY_MB[4], (64, 1313.0));
    let err = fit.max_relative_error(&REFERENCE_MEMORY_MB);
    println!("c4 {:e} m0 {} max rel {err:e}", fit.c4, fit.m0);
    assert!(err <= 0.15);
    assert_eq!(memory_estimate(48), fit.megabytes(48) * 1e6);

    // Weighted least squares through a dense solver.
    let rows = REFERENCE_MEMORY_MB.len();
    let a = DMatrix::from_fn(rows, 2, |i, j| {
        let (n, y) = REFERENCE_MEMORY_MB[i];
        if j == 0 {
            (n as f64).powi(4) / y
        } else {
            1.0 / y
        }
    });
    let b = DVector::from_element(rows, 1.0);
    let sol = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
    assert!((sol[0] - fit.c4).abs() <= 1e-9 * fit.c4);
    assert!((sol[1] - fit.m0).abs() <= 1e-9 * fit.m0.abs());

    // Diagnostic only: n⁴ alone predicts 16× from 32 to 64.
    let ratio = 1313.0 / 177.0;
    println!(
        "table ratio {ratio}, quartic-only max rel error {}",
        REFERENCE_MEMORY_MB
            .iter()
            .map(|&(n, y)| ((fit.quartic_megabytes(n) - y) / y).abs())
            .fold(0.0, f64::max)
    );
    assert!(matrix_free_footprint(32, 8) < memory_estimate(32));
}

#[test]
fn strong_scaling_trend() {
    let costs = ModeledCosts {
        poly: poly(&[1.0, 1.0, 1.0]),
        ..Default::default()
    };
    let splits = [(1, 2), (2, 2), (2, 4), (4, 4), (4, 8), (8, 8)];
    let rows = strong_sweep(&costs, 64, 3 * 32 * 32, &splits).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].theoretical > w[0].theoretical);
        assert!(w[1].sv > w[0].sv);
        assert!(w[1].measured > w[0].measured);
        assert!(w[1].efficiency <= w[0].efficiency);
    }
    assert!(strong_sweep(&costs, 64, 100, &[(3, 1)]).is_err());
}

#[test]
fn weak_scaling_trend() {
    let costs = ModeledCosts {
        poly: poly(&[1.0, 1.0, 1.0]),
        ..Default::default()
    };
    let sizes: Vec<(usize, usize)> = (0..8).map(|k| (4 << k, 96 << k)).collect();
    let rows = weak_sweep(&costs, 2, 4, &sizes).unwrap();
    let limit = costs.rho_ratio * 8.0;
    for w in rows.windows(2) {
        assert!(w[1].sv < w[0].sv);
        assert!((limit - w[1].theoretical).abs() < (limit - w[0].theoretical).abs());
    }
    assert!((rows.last().unwrap().theoretical - limit).abs() < 1e-3 * limit);
}

#[test]
fn reference_tables_are_echoed() {
    let mem = memory_table_csv(8);
    let lines: Vec<&str> = mem.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines[0].contains("_MB"));
    assert!(lines[1].starts_with("32,177,"));
    assert!(lines[8].starts_with("88,4427,"));

    let sp = speedup_table_csv(8).unwrap();
    assert!(sp.lines().nth(1).unwrap().starts_with("32,15.3,"));
    assert!(sp.lines().nth(8).unwrap().starts_with("88,20.54,"));

    let weak = weak_scaling_csv(&ModeledCosts::default(), 1).unwrap();
    let rows: Vec<&str> = weak.lines().collect();
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("2,6100,3.3,6144,"));
    assert!(rows[6].starts_with("64,190000,320,196608,"));
    assert_eq!(
        REFERENCE_WEAK_SCALING
            .iter()
            .map(|r| r.0)
            .collect::<Vec<_>>(),
        [2, 4, 8, 16, 32, 64]
    );
}

#[test]
fn invalid_polynomials_are_rejected() {
    assert!(ComplexityPoly::new(vec![]).is_err());
    assert!(ComplexityPoly::new(vec![1.0, 0.0]).is_err());
    assert!(ComplexityPoly::new(vec![-1.0, 1.0]).is_err());
    assert!(ComplexityPoly::new(vec![f64::NAN, 1.0]).is_err());
}
