//! Batch driver for plaquette random-cluster experiments.
//!
//! Exit codes: 0 when every assertion holds, 1 on a verification failure
//! (the report carries a witness), 2 on usage errors.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use prcm_core::{HomologyError, MeasureError, SamplerError};
use thiserror::Error;

use crate::config::{ConfigFile, ExperimentConfig, Resolved};
use crate::report::{Point, Report};

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "PRCM_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Homology(#[from] HomologyError),
}

#[derive(Parser, Debug)]
#[command(name = "prcm", version, about = "Plaquette random-cluster model experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact table, marginals and pressure.
    Enumerate(ExperimentConfig),
    /// Exact duality between a measure and its dual.
    VerifyDuality(ExperimentConfig),
    /// FKG lattice condition on every pair of configurations.
    VerifyFkg(ExperimentConfig),
    /// Holley's criterion between the context and an upper measure.
    VerifyHolley(ExperimentConfig),
    /// Conditioning on annulus states against the combined boundary condition.
    VerifyConditioning(ExperimentConfig),
    /// Exact marginals of the spin/plaquette coupling.
    VerifyCoupling(ExperimentConfig),
    /// Configuration independence of the Euler-Poincare constant.
    VerifyEp(ExperimentConfig),
    /// Heat-bath sampling.
    Sample(ExperimentConfig),
    /// Coupled spin/plaquette sampling.
    SampleCoupled(ExperimentConfig),
    /// Density, pressure or Wilson-loop estimates with error bars.
    Estimate(ExperimentConfig),
    /// Runs a TOML or JSON config file, or the config embedded in a report.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

impl Command {
    fn split(self) -> Result<(String, ExperimentConfig), CliError> {
        use Command::*;
        let (name, cfg) = match self {
            Enumerate(c) => ("enumerate", c),
            VerifyDuality(c) => ("verify-duality", c),
            VerifyFkg(c) => ("verify-fkg", c),
            VerifyHolley(c) => ("verify-holley", c),
            VerifyConditioning(c) => ("verify-conditioning", c),
            VerifyCoupling(c) => ("verify-coupling", c),
            VerifyEp(c) => ("verify-ep", c),
            Sample(c) => ("sample", c),
            SampleCoupled(c) => ("sample-coupled", c),
            Estimate(c) => ("estimate", c),
            Run { config } => {
                let file = ConfigFile::load(&config)?;
                return Ok((file.command, file.config));
            }
        };
        Ok((name.to_string(), cfg))
    }
}

/// Runs one experiment and returns its report.
pub fn execute(command: &str, raw: &ExperimentConfig) -> Result<Report, CliError> {
    let cfg = Resolved::new(raw)?;
    let per_point: fn(&Resolved, &num_rational::BigRational) -> Result<Point, CliError> = match command {
        "enumerate" => commands::enumerate,
        "verify-duality" => commands::verify_duality_cmd,
        "verify-fkg" => commands::verify_fkg_cmd,
        "verify-holley" => commands::verify_holley_cmd,
        "verify-conditioning" => commands::verify_conditioning_cmd,
        "verify-coupling" => commands::verify_coupling_cmd,
        "sample" => commands::sample,
        "sample-coupled" => commands::sample_coupled,
        "estimate" => commands::estimate,
        "verify-ep" => |cfg, _| commands::verify_ep(cfg),
        other => return Err(CliError::Usage(format!("unknown command {other:?}"))),
    };
    let ps = if command == "verify-ep" { vec![cfg.ps[0].clone()] } else { cfg.ps.clone() };
    let points = ps.iter().map(|p| per_point(&cfg, p)).collect::<Result<Vec<_>, _>>()?;
    Ok(Report { command: command.to_string(), config: cfg.echo(), points })
}

fn configure_workers() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().map_err(|_| CliError::Usage(format!("{WORKERS_ENV}={v:?} is not a count")))?;
        // A pool that is already built keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses arguments, runs, writes the report and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_workers().and_then(|()| {
        let (name, raw) = cli.command.split()?;
        let report = execute(&name, &raw)?;
        let format = report.config.format.unwrap_or_default();
        report.emit(format, report.config.output.as_deref())?;
        Ok(report.passed())
    });
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
