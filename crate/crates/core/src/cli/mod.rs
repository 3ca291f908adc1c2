//! Command-line pipeline: configuration, cached stages, reporting and the
//! entry point used by the binary.

mod config;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::cotrain::Ablation;
use crate::error::Error;

pub use config::{DensityConfig, FemConfig, InputConfig, OutputConfig, RunConfig, StageHashes};
pub use report::{collect, read_run, render, ReportRow};
pub use stages::{
    read_toml, write_toml, FemSummary, FitSummary, Pipeline, PretrainSummary, RunRecord, Stage, StageDirs, Timing,
    TIMING_FILE,
};

/// Environment variable holding the solver thread count.
pub const THREADS_ENV: &str = "STRESSFIELD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stressfield", version, about = "Stress-aware shape refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stage; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Drop the exterior density constraint.
    #[arg(long, global = true)]
    pub no_gc: bool,
    /// Drop the FEM anchor term.
    #[arg(long, global = true)]
    pub no_fem_embed: bool,
    /// Drop the stress-spread design term.
    #[arg(long, global = true)]
    pub no_design: bool,
    /// Keep the displacement network frozen during co-training.
    #[arg(long, global = true)]
    pub no_physics: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the geometry network to the input shape.
    Fit,
    /// Solve the voxel FEM problem and export anchor data.
    Fem,
    /// Pretrain the displacement network.
    Pretrain,
    /// Co-train geometry and displacement.
    Cotrain,
    /// Print a table of all runs under the output directory.
    Report,
}

impl GlobalArgs {
    fn ablation(&self) -> Ablation {
        Ablation {
            no_gc: self.no_gc,
            no_fem_embed: self.no_fem_embed,
            no_design: self.no_design,
            no_physics: self.no_physics,
        }
    }

    /// Load the config and apply command-line overrides.
    pub fn resolve(&self) -> crate::Result<RunConfig> {
        let path = self.config.as_ref().ok_or_else(|| Error::config("--config is required for this command"))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.apply_seed(seed);
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        cfg.apply_ablation(self.ablation());
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Process exit code for an error: 2 for bad input, 3 for numerical
/// failure, 4 for I/O and corrupt files.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Unsupported(_)
        | Error::Mesh(_)
        | Error::EmptyShape(_)
        | Error::Sampling(_)
        | Error::Constraint(_)
        | Error::Parse { .. }
        | Error::Validation(_) => 2,
        Error::Divergence { .. } | Error::Solver { .. } => 3,
        Error::Io { .. } | Error::Integrity { .. } => 4,
    }
}

fn hint(e: &Error) -> Option<&'static str> {
    match e {
        Error::Constraint(_) => Some("check that [boundary] support band intersects the shape"),
        Error::EmptyShape(_) => Some("check the input shape and the density temperature"),
        Error::Divergence { .. } => Some("try a lower learning rate"),
        _ => None,
    }
}

fn threads_from_env() -> crate::Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(1),
    }
}

pub fn execute(cli: &Cli) -> crate::Result<()> {
    crate::set_threads(threads_from_env()?);
    let stage = match cli.command {
        Command::Fit => Stage::Fit,
        Command::Fem => Stage::Fem,
        Command::Pretrain => Stage::Pretrain,
        Command::Cotrain => Stage::Cotrain,
        Command::Report => {
            let out = match (&cli.global.out, &cli.global.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => cli.global.resolve()?.output.dir,
                (None, None) => OutputConfig::default().dir,
            };
            print!("{}", render(&collect(&out)?));
            return Ok(());
        }
    };
    let pipeline = Pipeline::new(cli.global.resolve()?)?;
    let dir = pipeline.run(stage)?;
    println!("{}", dir.display());
    Ok(())
}

/// Parse arguments, run, and map errors to exit codes.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = hint(&e) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
