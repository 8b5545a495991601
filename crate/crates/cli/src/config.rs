//! Experiment configuration: one TOML document with a section per block.
//! Unknown keys are rejected and every block is validated against the
//! preconditions of the module that consumes it before anything runs.

use std::path::{Path, PathBuf};

use ddvar_core::assimilation::{
    twin_experiment, CovarianceKind, CovarianceSpec, LayoutSpec, TruthSpec, TwinExperiment,
    TwinSpec,
};
use ddvar_core::orchestrator::DdRunConfig;
use ddvar_core::perfmodel::{ComplexityPoly, ModeledCosts};
use ddvar_core::solver::{ExchangeEvery, GnConfig};
use ddvar_core::spacetime::{build_decomposition, DecompositionSpec, SpaceTimeGrid};
use ddvar_core::swe::SweParams;
use ddvar_core::{DdvarError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    /// Points per direction (`n × n`).
    pub n: usize,
    /// Time levels in the window.
    pub m: usize,
    pub dt: f64,
    /// Southernmost latitude and spacings in radians; derived from `n`
    /// when absent.
    pub theta0: Option<f64>,
    pub dlambda: Option<f64>,
    pub dtheta: Option<f64>,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            n: 6,
            m: 3,
            dt: 1800.0,
            theta0: None,
            dlambda: None,
            dtheta: None,
        }
    }
}

impl GridBlock {
    pub fn build(&self) -> Result<SpaceTimeGrid> {
        let u = SpaceTimeGrid::uniform(self.n, self.n, self.m, self.dt)
            .map_err(|e| rekey(e, "grid"))?;
        SpaceTimeGrid::new(
            self.n,
            self.n,
            self.m,
            self.dt,
            self.dlambda.unwrap_or(u.dlambda),
            self.dtheta.unwrap_or(u.dtheta),
            self.theta0.unwrap_or(u.theta0),
        )
        .map_err(|e| rekey(e, "grid"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssimilationBlock {
    pub lambda: f64,
    pub mu: f64,
    pub sigma_b: f64,
    /// Observation error standard deviation used to weight the misfit.
    pub sigma_o: f64,
    /// Standard deviation of the noise added to synthetic observations.
    pub noise_std: f64,
    pub b_kind: CovarianceKind,
    /// Correlation length in grid points for `b_kind = "gaussian"`.
    pub length_scale: f64,
    pub layout: LayoutSpec,
    pub truth: TruthSpec,
    pub seed: u64,
}

impl Default for AssimilationBlock {
    fn default() -> Self {
        AssimilationBlock {
            lambda: 1.0,
            mu: 1.0,
            sigma_b: 1.0,
            sigma_o: 0.1,
            noise_std: 0.0,
            b_kind: CovarianceKind::Diagonal,
            length_scale: 1.0,
            layout: LayoutSpec::default(),
            truth: TruthSpec::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub max_outer: usize,
    pub outer_tol: f64,
    pub max_inner: usize,
    pub inner_tol: f64,
    pub damping: f64,
    pub eps: f64,
    pub max_exchange_rounds: usize,
    pub exchange_every: ExchangeEvery,
    pub workers: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let gn = GnConfig::default();
        let dd = DdRunConfig::default();
        SolverBlock {
            max_outer: gn.max_outer,
            outer_tol: gn.outer_tol,
            max_inner: gn.max_inner,
            inner_tol: gn.inner_tol,
            damping: gn.damping,
            eps: dd.eps,
            max_exchange_rounds: dd.max_exchange_rounds,
            exchange_every: dd.exchange_every,
            workers: dd.workers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    /// Also run the undecomposed oracle in `twin` and report the comparison.
    pub compare_global: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: PathBuf::from("ddvar-out"),
            formats: vec![Format::Csv, Format::Json, Format::Snapshot],
            compare_global: true,
        }
    }
}

/// Tolerances and sizes of the `validate` suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateBlock {
    pub adjoint_pairs: usize,
    pub adjoint_tol: f64,
    pub taylor_eps: Vec<f64>,
    pub taylor_min_order: f64,
    pub partition_fields: usize,
    pub oracle_tol: f64,
}

impl Default for ValidateBlock {
    fn default() -> Self {
        ValidateBlock {
            adjoint_pairs: 100,
            adjoint_tol: 1e-12,
            taylor_eps: vec![1e-2, 1e-3, 1e-4, 1e-5],
            taylor_min_order: 1.9,
            partition_fields: 20,
            oracle_tol: 1e-8,
        }
    }
}

/// Inputs of the `perf` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerfBlock {
    pub costs: ModeledCosts,
    /// Local time levels used for the reference tables.
    pub d_t: usize,
    /// Global size of the strong-scaling sweep: time levels and spatial values.
    pub sweep_levels: usize,
    pub sweep_points: usize,
    /// `(q, p)` splits of the strong-scaling sweep.
    pub splits: Vec<[usize; 2]>,
    /// Fixed `(q, p)` split and growing local `(d_t, d_s)` sizes of the
    /// weak-scaling sweep.
    pub weak_split: [usize; 2],
    pub weak_sizes: Vec<[usize; 2]>,
    /// Output directories of a prior `run-global` and `run-dd` of the same
    /// problem; their timings feed the measured table.
    pub global_run: Option<PathBuf>,
    pub dd_run: Option<PathBuf>,
}

impl Default for PerfBlock {
    fn default() -> Self {
        PerfBlock {
            costs: ModeledCosts::default(),
            d_t: 8,
            sweep_levels: 64,
            sweep_points: 3 * 32 * 32,
            splits: vec![[1, 2], [2, 2], [2, 4], [4, 4], [4, 8], [8, 8]],
            weak_split: [2, 4],
            weak_sizes: (0..8).map(|k| [4 << k, 96 << k]).collect(),
            global_run: None,
            dd_run: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub grid: GridBlock,
    /// Model parameters; absent means defaults fitted to the grid.
    pub model: Option<SweParams>,
    pub decomposition: DecompositionSpec,
    pub assimilation: AssimilationBlock,
    pub solver: SolverBlock,
    pub output: OutputBlock,
    pub validate: ValidateBlock,
    pub perf: PerfBlock,
}

fn rekey(e: DdvarError, block: &str) -> DdvarError {
    match e {
        DdvarError::Config { key, reason } if !key.starts_with(block) => {
            DdvarError::config(format!("{block}.{key}"), reason)
        }
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| DdvarError::config(toml_key(&e), e.to_string().trim_end().to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DdvarError::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fills the model block from the grid and validates every block.
    pub fn resolve(&mut self) -> Result<()> {
        let grid = self.grid.build()?;
        if self.model.is_none() {
            self.model = Some(SweParams::for_grid(&grid));
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        if grid.nt < 2 {
            return Err(DdvarError::config("grid.m", "needs at least 2 time levels"));
        }
        self.params().validate(&grid)?;
        build_decomposition(&grid, &self.decomposition)?;
        self.covariance().validate()?;
        let a = &self.assimilation;
        a.layout.validate()?;
        if !(a.sigma_o.is_finite() && a.sigma_o > 0.0) {
            return Err(DdvarError::config(
                "assimilation.sigma_o",
                format!("must be positive, got {}", a.sigma_o),
            ));
        }
        if !(a.noise_std.is_finite() && a.noise_std >= 0.0) {
            return Err(DdvarError::config(
                "assimilation.noise_std",
                format!("must be nonnegative, got {}", a.noise_std),
            ));
        }
        for (key, v) in [("assimilation.lambda", a.lambda), ("assimilation.mu", a.mu)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DdvarError::config(
                    key,
                    format!("must be nonnegative, got {v}"),
                ));
            }
        }
        self.run_config().validate()?;
        if self.output.formats.is_empty() {
            return Err(DdvarError::config(
                "output.formats",
                "must list at least one of csv, json, snapshot",
            ));
        }
        let v = &self.validate;
        if v.adjoint_pairs == 0 || v.partition_fields == 0 {
            return Err(DdvarError::config(
                "validate",
                "adjoint_pairs and partition_fields must be at least 1",
            ));
        }
        if v.taylor_eps.len() < 2 || v.taylor_eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(DdvarError::config(
                "validate.taylor_eps",
                "needs at least two positive step sizes",
            ));
        }
        for (key, t) in [
            ("validate.adjoint_tol", v.adjoint_tol),
            ("validate.oracle_tol", v.oracle_tol),
        ] {
            if !(t.is_finite() && t > 0.0) {
                return Err(DdvarError::config(
                    key,
                    format!("must be positive, got {t}"),
                ));
            }
        }
        let p = &self.perf;
        p.costs.validate()?;
        if p.d_t == 0 {
            return Err(DdvarError::config("perf.d_t", "must be at least 1"));
        }
        if p.global_run.is_some() != p.dd_run.is_some() {
            return Err(DdvarError::config(
                "perf.dd_run",
                "global_run and dd_run must be given together",
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> SpaceTimeGrid {
        self.grid.build().expect("validated grid")
    }

    pub fn params(&self) -> SweParams {
        self.model
            .unwrap_or_else(|| SweParams::for_grid(&self.grid()))
    }

    pub fn covariance(&self) -> CovarianceSpec {
        CovarianceSpec {
            kind: self.assimilation.b_kind,
            sigma_b: self.assimilation.sigma_b,
            length_scale: self.assimilation.length_scale,
        }
    }

    pub fn twin_spec(&self) -> TwinSpec {
        let a = &self.assimilation;
        TwinSpec {
            truth: a.truth.clone(),
            covariance: self.covariance(),
            layout: a.layout.clone(),
            sigma_o: a.sigma_o,
            noise_std: a.noise_std,
            lambda: a.lambda,
            mu: a.mu,
            seed: a.seed,
        }
    }

    pub fn twin(&self) -> Result<TwinExperiment> {
        twin_experiment(&self.grid(), &self.params(), &self.twin_spec())
    }

    pub fn run_config(&self) -> DdRunConfig {
        let s = &self.solver;
        DdRunConfig {
            decomposition: self.decomposition,
            solver: GnConfig {
                max_outer: s.max_outer,
                outer_tol: s.outer_tol,
                max_inner: s.max_inner,
                inner_tol: s.inner_tol,
                damping: s.damping,
            },
            eps: s.eps,
            max_exchange_rounds: s.max_exchange_rounds,
            exchange_every: s.exchange_every,
            workers: s.workers,
        }
    }

    pub fn poly(&self) -> &ComplexityPoly {
        &self.perf.costs.poly
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    /// The resolved configuration with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Best-effort dotted key from a TOML parse error.
fn toml_key(e: &toml::de::Error) -> String {
    let msg = e.message();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return rest[..end].to_string();
        }
    }
    "config".to_string()
}
