//! Command-line front end for adtplan.
//!
//! Every command reads a JSON scenario file and writes one CSV table to a
//! file or to standard output. Output depends only on the configuration and
//! flags, so repeated runs are byte-identical.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Config, ConfigError};

/// Failure of a command, classified for the exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] adtplan_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adtplan", version, about = "Optimal designs for accelerated degradation tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Spacing of the candidate stress grid on [0, 1].
    #[arg(long, value_name = "F")]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal design, criterion value and optimality certificate.
    Design {
        #[command(flatten)]
        common: Common,
        /// Also apportion the design to this many units.
        #[arg(long, value_name = "N")]
        n_units: Option<usize>,
    },
    /// Optimal design and efficiencies over a range of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "NAME")]
        param: Option<String>,
        #[arg(long, value_name = "F", allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, value_name = "F", allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long, value_name = "F")]
        step: Option<f64>,
    },
    /// Failure-time quantiles, with an optional CDF trace.
    Quantile {
        #[command(flatten)]
        common: Common,
        /// Comma-separated quantile levels.
        #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "0.5")]
        alphas: Vec<f64>,
        /// Write F_T and the component CDFs on a time grid to this file.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        #[arg(long, value_name = "F", default_value_t = 10.0)]
        t_max: f64,
        #[arg(long, value_name = "F", default_value_t = 0.05)]
        t_step: f64,
    },
    /// Monte Carlo check of the asymptotic variance.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        #[arg(long, value_name = "N")]
        n_units: Option<usize>,
        #[arg(long, value_name = "N")]
        replications: Option<usize>,
    },
    /// Efficiency of fixed designs relative to the optimal design.
    Efficiency {
        #[command(flatten)]
        common: Common,
        /// Design CSV with x and weight columns.
        #[arg(long, value_name = "PATH")]
        design: Option<PathBuf>,
    },
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Execute one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design { common, n_units } => {
            let cfg = Config::load(&common.config)?;
            let args = commands::DesignArgs {
                grid_step: common.grid_step,
                n_units,
            };
            commands::design(&cfg, &args, sink(&common.out)?)
        }
        Command::Sweep {
            common,
            param,
            from,
            to,
            step,
        } => {
            let cfg = Config::load(&common.config)?;
            let args = commands::SweepArgs {
                grid_step: common.grid_step,
                param,
                from,
                to,
                step,
            };
            commands::sweep(&cfg, &args, sink(&common.out)?)
        }
        Command::Quantile {
            common,
            alphas,
            trace,
            t_max,
            t_step,
        } => {
            let cfg = Config::load(&common.config)?;
            let args = commands::QuantileArgs { alphas, t_max, t_step };
            commands::quantile(&cfg, &args, sink(&common.out)?)?;
            if let Some(path) = trace {
                commands::cdf_trace(&cfg, &args, sink(&Some(path))?)?;
            }
            Ok(())
        }
        Command::Validate {
            common,
            seed,
            n_units,
            replications,
        } => {
            let cfg = Config::load(&common.config)?;
            let args = commands::ValidateArgs {
                grid_step: common.grid_step,
                seed,
                n_units,
                replications,
            };
            commands::validate(&cfg, &args, sink(&common.out)?)
        }
        Command::Efficiency { common, design } => {
            let cfg = Config::load(&common.config)?;
            let args = commands::EfficiencyArgs {
                grid_step: common.grid_step,
                design,
            };
            commands::efficiency(&cfg, &args, sink(&common.out)?)
        }
    }
}
