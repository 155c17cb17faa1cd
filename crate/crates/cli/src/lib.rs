//! Command-line harness around the `nlsmod` library.
//!
//! Exit codes: `0` success, `1` usage or input error, `2` infeasible
//! cancellation system, `3` verification or cross-check failure, `4` runtime
//! failure (I/O, numerical breakdown).

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{parse_range, ConfigFile, Preset, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Verification(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<nlsmod::energy::EnergyError> for CliError {
    fn from(e: nlsmod::energy::EnergyError) -> Self {
        use nlsmod::energy::EnergyError::*;
        match e {
            InvalidParameters { .. } => CliError::Usage(e.to_string()),
            Infeasible { .. } | NoGammaRepresentative { .. } => CliError::Infeasible(e.to_string()),
            Inconsistent(_) => CliError::Verification(e.to_string()),
        }
    }
}

impl From<nlsmod::monitor::MonitorError> for CliError {
    fn from(e: nlsmod::monitor::MonitorError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<nlsmod::spectral::NumericError> for CliError {
    fn from(e: nlsmod::spectral::NumericError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "nlsmod", version, about = "Modified energies for the periodic defocusing NLS")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the energy correction and write the energy document.
    Build {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        p: usize,
        /// Energy document path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the linear-flow identities and solve feasibility over ranges.
    Verify {
        /// e.g. `2..8`, `5`, or `2,4..6`.
        #[arg(long)]
        k: String,
        #[arg(long)]
        p: String,
        #[arg(long, hide = true)]
        corrupt_catalogue: bool,
    },
    /// Integrate from the chosen initial data and write the CSV report.
    Simulate(RunArgs),
    /// Compare the exact derivative with its decomposition and with finite differences.
    Crosscheck(RunArgs),
    /// Track the bound ratio and cubic remainder along a trajectory.
    Monitor(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long = "n-modes")]
    pub n_modes: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "r-h1")]
    pub r_h1: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    /// Energy document from `build`; solved in-process if omitted.
    #[arg(long)]
    pub energy: Option<PathBuf>,
    /// Report path (CSV); metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// JSON document with the same keys as the long flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "record-stride")]
    pub record_stride: Option<usize>,
    #[arg(long = "padding-factor")]
    pub padding_factor: Option<usize>,
    /// Plane-wave amplitude.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Plane-wave wavenumber.
    #[arg(long)]
    pub wavenumber: Option<i64>,
    #[arg(long = "fd-delta")]
    pub fd_delta: Option<f64>,
    #[arg(long = "fd-dt")]
    pub fd_dt: Option<f64>,
}

impl RunArgs {
    pub fn as_config(&self) -> ConfigFile {
        ConfigFile {
            k: self.k,
            p: self.p,
            n_modes: self.n_modes,
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
            r_h1: self.r_h1,
            decay: self.decay,
            energy: self.energy.clone(),
            out: self.out.clone(),
            preset: self.preset,
            record_stride: self.record_stride,
            padding_factor: self.padding_factor,
            amplitude: self.amplitude,
            wavenumber: self.wavenumber,
            fd_delta: self.fd_delta,
            fd_dt: self.fd_dt,
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
