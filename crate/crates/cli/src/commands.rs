//! Subcommand bodies. Each returns the exit status on success; errors are
//! mapped to exit codes by the caller.

use std::fmt::Write;
use std::path::Path;

use ddvar_core::assimilation::{rmse, TwinExperiment};
use ddvar_core::orchestrator::{run_dd, run_global, AnalysisReport};
use ddvar_core::perfmodel::{
    measured_scaleup, memory_table_csv, speedup_table_csv, strong_sweep, theoretical_scaleup,
    weak_scaling_csv, weak_sweep, MemoryFit, ScalabilityRecord, SweepRow, REFERENCE_MEMORY_MB,
};
use ddvar_core::spacetime::{build_decomposition, SpaceTimeField, NVARS};
use ddvar_core::swe::Snapshot;
use ddvar_core::{DdvarError, Result};
use serde_json::{json, Value};

use crate::checks::{self, CheckOutcome, Fault};
use crate::config::{ExperimentConfig, Format};
use crate::output::RunDir;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code(e: &DdvarError) -> i32 {
    match e {
        DdvarError::Config { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

pub fn validate(cfg: &ExperimentConfig, run: &mut RunDir, fault: Fault) -> Result<i32> {
    let grid = cfg.grid();
    let params = cfg.params();
    let v = &cfg.validate;
    let truth = &cfg.assimilation.truth;
    let seed = cfg.assimilation.seed;

    let mut shapes = vec![cfg.decomposition];
    for s in checks::partition_shapes(&grid) {
        if !shapes.contains(&s) {
            shapes.push(s);
        }
    }
    let twin = cfg.twin()?;
    let outcomes = vec![
        checks::adjoint_check(
            &grid,
            &params,
            truth,
            v.adjoint_pairs,
            v.adjoint_tol,
            seed,
            fault,
        )?,
        checks::taylor_check(
            &grid,
            &params,
            truth,
            &v.taylor_eps,
            v.taylor_min_order,
            seed,
        )?,
        checks::partition_check(&grid, &shapes, v.partition_fields, seed)?,
        checks::dense_oracle_check(&twin.setup, v.oracle_tol)?,
    ];
    for o in &outcomes {
        eprintln!(
            "{:<20} {} {}={:e} (tolerance {:e}; {})",
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            o.metric,
            o.value,
            o.tolerance,
            o.detail
        );
        if cfg.wants(Format::Csv) {
            run.write_str(&format!("validate_{}.csv", o.name), &o.csv)?;
        }
    }
    if cfg.wants(Format::Csv) {
        run.write_str("validate_summary.csv", &checks::summary_csv(&outcomes))?;
    }
    if cfg.wants(Format::Json) {
        run.write_str("validate.json", &serde_json::to_string_pretty(&outcomes)?)?;
    }
    Ok(if outcomes.iter().all(|o: &CheckOutcome| o.passed) {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    })
}

fn truth_field(tw: &TwinExperiment) -> Result<SpaceTimeField> {
    let levels: Vec<&[f64]> = tw.truth.states.iter().map(|s| s.data.as_slice()).collect();
    SpaceTimeField::from_levels(&tw.truth.grid, &levels)
}

/// Grid values of the initial state, one row per point.
fn state_csv(tw: &TwinExperiment, report: &AnalysisReport) -> String {
    let grid = &tw.setup.grid;
    let mut out = String::from("var,lat,lon,truth,background,analysis\n");
    let names = ["u", "v", "h"];
    for (var, name) in names.iter().enumerate().take(NVARS) {
        for j in 0..grid.nlat {
            for i in 0..grid.nlon {
                let k = grid.index(var, j, i);
                let _ = writeln!(
                    out,
                    "{name},{j},{i},{},{},{}",
                    tw.truth.states[0].data[k],
                    tw.setup.background.data[k],
                    report.analysis.data[k]
                );
            }
        }
    }
    out
}

fn write_report(
    cfg: &ExperimentConfig,
    run: &mut RunDir,
    tw: &TwinExperiment,
    report: &AnalysisReport,
) -> Result<()> {
    let grid = &tw.setup.grid;
    if cfg.wants(Format::Json) {
        run.write_str("report.json", &report.to_json()?)?;
        run.write_str("timings.json", &report.timings_json()?)?;
        let dec = build_decomposition(grid, &report.config.decomposition)?;
        run.write_str(
            "geometry.json",
            &serde_json::to_string_pretty(&dec.geometry_json())?,
        )?;
    }
    if cfg.wants(Format::Csv) {
        run.write_str("rounds.csv", &report.rounds_csv())?;
        run.write_str("cost_history.csv", &report.cost_history_csv())?;
        run.write_str("state.csv", &state_csv(tw, report))?;
        if let Some(h) = &report.history {
            run.write_str("convergence.csv", &h.to_csv())?;
        }
    }
    if cfg.wants(Format::Snapshot) {
        for (name, state) in [
            ("analysis.snap", &report.analysis),
            ("background.snap", &tw.setup.background),
            ("truth.snap", &tw.truth.states[0]),
        ] {
            let snap = Snapshot {
                grid: *grid,
                params: tw.setup.params,
                level: 0,
                state: state.clone(),
            };
            run.write(name, &snap.to_bytes()?)?;
        }
    }
    for n in &report.notices {
        eprintln!("notice: {n}");
    }
    Ok(())
}

fn rmse_csv(tw: &TwinExperiment, report: &AnalysisReport) -> String {
    let n = tw.setup.grid.points();
    let truth = &tw.truth.states[0].data;
    let bg = &tw.setup.background.data;
    let an = &report.analysis.data;
    let mut out = String::from("variable,background_rmse,analysis_rmse,ratio\n");
    let mut row = |name: &str, r: std::ops::Range<usize>| {
        let b = rmse(&bg[r.clone()], &truth[r.clone()]);
        let a = rmse(&an[r.clone()], &truth[r]);
        let _ = writeln!(out, "{name},{b:e},{a:e},{:e}", a / b);
    };
    row("u", 0..n);
    row("v", n..2 * n);
    row("h", 2 * n..3 * n);
    row("all", 0..3 * n);
    out
}

pub fn twin(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<i32> {
    let tw = cfg.twin()?;
    let reference = truth_field(&tw)?;
    let rc = cfg.run_config();
    let report = run_dd(&tw.setup, &rc, Some(&reference))?;
    write_report(cfg, run, &tw, &report)?;
    let table = rmse_csv(&tw, &report);
    if cfg.wants(Format::Csv) {
        run.write_str("rmse.csv", &table)?;
    }
    let truth = &tw.truth.states[0].data;
    eprintln!(
        "rmse: background {:e}, analysis {:e}",
        rmse(&tw.setup.background.data, truth),
        rmse(&report.analysis.data, truth)
    );
    if cfg.output.compare_global && report.subdomain_count > 1 {
        let global = run_global(&tw.setup, &rc, Some(&reference))?;
        let jg = global.analysis_cost.total;
        let jdd = report.analysis_cost.total;
        let rel = (jdd - jg).abs() / jg.abs().max(f64::MIN_POSITIVE);
        let bound = jg <= report.gather.cost.total + 1e-8 * (1.0 + jg);
        let csv = format!(
            "j_global,j_dd,relative_difference,j_gather,global_bound_holds,rho_global,rho_dd\n{jg:e},{jdd:e},{rel:e},{:e},{bound},{},{}\n",
            report.gather.cost.total, global.iterations.rho_run, report.iterations.rho_run
        );
        eprintln!("oracle: J_G {jg:e}, J_DD {jdd:e}, relative difference {rel:e}");
        if cfg.wants(Format::Csv) {
            run.write_str("oracle.csv", &csv)?;
        }
    }
    Ok(EXIT_OK)
}

pub fn run_dd_cmd(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<i32> {
    let tw = cfg.twin()?;
    let report = run_dd(&tw.setup, &cfg.run_config(), Some(&truth_field(&tw)?))?;
    write_report(cfg, run, &tw, &report)?;
    Ok(EXIT_OK)
}

pub fn run_global_cmd(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<i32> {
    let tw = cfg.twin()?;
    let report = run_global(&tw.setup, &cfg.run_config(), Some(&truth_field(&tw)?))?;
    write_report(cfg, run, &tw, &report)?;
    Ok(EXIT_OK)
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DdvarError::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn field(v: &Value, path: &[&str]) -> Result<f64> {
    let mut cur = v;
    for p in path {
        cur = cur
            .get(p)
            .ok_or_else(|| DdvarError::Io(format!("missing `{}` in run output", path.join("."))))?;
    }
    cur.as_f64()
        .ok_or_else(|| DdvarError::Io(format!("`{}` is not a number", path.join("."))))
}

/// Scalability row from the report and timings of two prior runs.
fn measured_row(cfg: &ExperimentConfig, global_dir: &Path, dd_dir: &Path) -> Result<String> {
    let g = read_json(&global_dir.join("report.json"))?;
    let gt = read_json(&global_dir.join("timings.json"))?;
    let d = read_json(&dd_dir.join("report.json"))?;
    let dt = read_json(&dd_dir.join("timings.json"))?;
    let grid = cfg.grid();
    let qp = field(&d, &["subdomain_count"])? as usize;
    let n = grid.nt * grid.state_len();
    let rec = ScalabilityRecord {
        qp,
        n_loc: n / qp.max(1),
        rho_g: field(&g, &["iterations", "rho_run"])?.max(1.0),
        rho_dd: field(&d, &["iterations", "rho_run"])?.max(1.0),
        t_flop: (field(&dt, &["local_solve"])? / qp as f64).max(f64::MIN_POSITIVE),
        t_oh: field(&dt, &["exchange"])? + field(&dt, &["gather"])?,
        s_loc: 1.0,
    };
    rec.validate()?;
    let t_global = field(&gt, &["local_solve"])?;
    let sc = measured_scaleup(t_global, rec.t_flop, rec.t_oh, qp as f64, false);
    Ok(format!(
        "measured,{},{},{},{},{:e},{:e},{:e},{:e},{:e}\n",
        rec.qp,
        rec.n_loc,
        rec.rho_g,
        rec.rho_dd,
        t_global,
        rec.t_flop,
        rec.t_oh,
        rec.theoretical(cfg.poly()),
        sc
    ))
}

pub fn perf(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<i32> {
    let p = &cfg.perf;
    let mut notices = Vec::new();
    let header = "source,qp,n_loc_points,rho_g,rho_dd,t_flop_global_s,t_flop_loc_s,t_oh_s,sc_theoretical,sc_measured\n";
    let measured = match (&p.global_run, &p.dd_run) {
        (Some(g), Some(d)) => match measured_row(cfg, g, d) {
            Ok(row) => Some(row),
            Err(e) => {
                notices.push(format!(
                    "measured timings unavailable ({e}); using the modeled fallback"
                ));
                None
            }
        },
        _ => {
            notices.push("no timing source configured; using the modeled fallback".to_string());
            None
        }
    };
    let measured = match measured {
        Some(row) => format!("{header}{row}"),
        None => {
            let grid = cfg.grid();
            let spec = &cfg.decomposition;
            let d_t = grid.nt / spec.q;
            let d_s = grid.state_len() / (spec.p1 * spec.p2);
            let r = p.costs.row(spec.q, spec.p1 * spec.p2, d_t, d_s)?;
            let th = theoretical_scaleup(
                p.costs.rho_ratio,
                1.0,
                r.n_loc as f64,
                r.qp as f64,
                &p.costs.poly,
            );
            format!(
                "{header}modeled,{},{},{},{},{:e},{:e},{:e},{:e},{:e}\n",
                r.qp,
                r.n_loc,
                p.costs.rho_ratio,
                1.0,
                r.t_flop_global,
                r.t_flop_loc,
                r.t_oh,
                th,
                r.measured
            )
        }
    };
    for n in &notices {
        eprintln!("notice: {n}");
    }

    let splits: Vec<(usize, usize)> = p.splits.iter().map(|s| (s[0], s[1])).collect();
    let strong = strong_sweep(&p.costs, p.sweep_levels, p.sweep_points, &splits)?;
    let sizes: Vec<(usize, usize)> = p.weak_sizes.iter().map(|s| (s[0], s[1])).collect();
    let weak = weak_sweep(&p.costs, p.weak_split[0], p.weak_split[1], &sizes)?;
    let fit = MemoryFit::reference();

    if cfg.wants(Format::Csv) {
        run.write_str("memory.csv", &memory_table_csv(cfg.grid().nt))?;
        run.write_str("speedup.csv", &speedup_table_csv(p.d_t)?)?;
        run.write_str("weak_scaling.csv", &weak_scaling_csv(&p.costs, p.d_t)?)?;
        run.write_str("strong_sweep.csv", &SweepRow::table_csv(&strong))?;
        run.write_str("weak_sweep.csv", &SweepRow::table_csv(&weak))?;
        run.write_str("measured.csv", &measured)?;
    }
    if cfg.wants(Format::Json) {
        let doc = json!({
            "memory_fit": {
                "c4_MB": fit.c4,
                "m0_MB": fit.m0,
                "quartic_only_MB": fit.quartic_only,
                "max_relative_error": fit.max_relative_error(&REFERENCE_MEMORY_MB),
            },
            "costs": p.costs,
            "strong_sweep": strong,
            "weak_sweep": weak,
            "notices": notices,
        });
        run.write_str("perf.json", &serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(EXIT_OK)
}
