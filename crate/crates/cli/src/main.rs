//! Command-line front end: solves configured models, runs the firm-exit
//! study, validates models against the oracles and values data.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 non-convergence,
//! 3 validation failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use adp::AdpError;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "adp", version, about = "Abstract dynamic programming toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured model and write value.csv, policy.csv and trace.csv.
    Solve(Common),
    /// Firm-exit experiments: value split, θ sweep, stationary mass, iterates and timings.
    FirmExitStudy(Common),
    /// Check the optimality properties by enumeration and sample operator properties.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Skip policy enumeration and run the sampled property checks only.
        #[arg(long)]
        properties_only: bool,
    },
    /// Solve a data-valuation problem after certifying its drift condition.
    DataValuation(Common),
    /// Compare VFI, HPI and OPI final values and timings.
    CompareAlgos(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Comma-separated OPI sweep counts; the first also sets `m`.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(tol) = self.tol {
            cfg.tol = tol;
        }
        if let Some(max_iter) = self.max_iter {
            cfg.max_iter = max_iter;
        }
        if let Some(m) = &self.m {
            if let Some(&first) = m.first() {
                cfg.m = first;
            }
            cfg.m_list = m.clone();
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", out.display())))?;
        Ok((cfg, out))
    }
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn non_convergence(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<AdpError> for CliError {
    fn from(e: AdpError) -> Self {
        let code = match &e {
            AdpError::Convergence(_)
            | AdpError::Divergence { .. }
            | AdpError::NumericalDomain { .. }
            | AdpError::OutsideValueSpace { .. }
            | AdpError::Singular
            | AdpError::Structure(_) => 2,
            AdpError::Stability(_) => 3,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(c) => c.load().and_then(|(cfg, out)| commands::solve(&cfg, &out)),
        Command::FirmExitStudy(c) => c.load().and_then(|(cfg, out)| commands::firm_exit_study(&cfg, &out)),
        Command::Validate { common, properties_only } => common
            .load()
            .and_then(|(cfg, out)| commands::validate(&cfg, &out, *properties_only)),
        Command::DataValuation(c) => c.load().and_then(|(cfg, out)| commands::data_valuation(&cfg, &out)),
        Command::CompareAlgos(c) => c.load().and_then(|(cfg, out)| commands::compare_algos(&cfg, &out)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
