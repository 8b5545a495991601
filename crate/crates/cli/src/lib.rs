//! Command-line front end: configuration, the validation suite, twin and
//! assimilation runs, performance tables and their output files.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use checks::Fault;
use commands::{exit_code, EXIT_CONFIG, EXIT_NUMERICAL};
use config::ExperimentConfig;
use output::{RunDir, OUTPUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "ddvar",
    version,
    about = "Space-time domain-decomposed 4D-Var on the shallow water equations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// TOML configuration; defaults are used for absent keys.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the configuration and the environment.
    #[arg(short, long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for the local solves.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    AdjointSign,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Adjoint, Taylor, partition-of-unity and dense-oracle checks.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Twin experiment: truth, background, observations, decomposed analysis.
    Twin(CommonArgs),
    /// Decomposed analysis of the configured problem.
    RunDd(CommonArgs),
    /// Undecomposed analysis of the configured problem.
    RunGlobal(CommonArgs),
    /// Performance-model tables and sweeps.
    Perf(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Validate { common, .. } => common,
            Command::Twin(c) | Command::RunDd(c) | Command::RunGlobal(c) | Command::Perf(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Twin(_) => "twin",
            Command::RunDd(_) => "run-dd",
            Command::RunGlobal(_) => "run-global",
            Command::Perf(_) => "perf",
        }
    }
}

fn load_config(common: &CommonArgs) -> ddvar_core::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let mut c = ExperimentConfig::default();
            c.resolve()?;
            c
        }
    };
    if let Some(w) = common.workers {
        cfg.solver.workers = w;
    }
    if let Some(dir) = &common.output_dir {
        cfg.output.directory = dir.clone();
    } else if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output.directory = PathBuf::from(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let common = cli.command.common();
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    // Output and manifest config echo never depend on the worker count.
    let mut echo = cfg.clone();
    echo.solver.workers = 1;
    echo.output.directory = PathBuf::from(".");
    let mut run = match RunDir::create(
        &cfg.output.directory,
        cli.command.name(),
        cfg.assimilation.seed,
        echo.to_toml(),
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let result = match &cli.command {
        Command::Validate { inject_fault, .. } => {
            let fault = match inject_fault {
                Some(FaultArg::AdjointSign) => Fault::AdjointSign,
                None => Fault::None,
            };
            commands::validate(&cfg, &mut run, fault)
        }
        Command::Twin(_) => commands::twin(&cfg, &mut run),
        Command::RunDd(_) => commands::run_dd_cmd(&cfg, &mut run),
        Command::RunGlobal(_) => commands::run_global_cmd(&cfg, &mut run),
        Command::Perf(_) => commands::perf(&cfg, &mut run),
    };
    let (code, error) = match result {
        Ok(code) => (code, None),
        Err(e) => {
            eprintln!("error: {e}");
            (exit_code(&e), Some(e.to_string()))
        }
    };
    if let Err(e) = run.finish(code, error) {
        eprintln!("error: {e}");
        return code.max(EXIT_NUMERICAL);
    }
    code
}
