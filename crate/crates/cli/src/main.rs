use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod checks;
mod commands;
mod config;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "backflow", version, about = "Arrival-time distributions measured by an optimized absorbing potential")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`section.key = value` lines); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the layer potentials and write the interchange file.
    Design {
        #[command(flatten)]
        common: Common,
        /// Potential file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the arrival-time series as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        potential: Option<PathBuf>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite and print one row per check.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Potential under test; designed from the configuration when omitted.
        #[arg(long)]
        potential: Option<PathBuf>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check name or group prefix to skip; repeatable.
        #[arg(long)]
        skip: Vec<String>,
    },
}

/// Exit statuses fixed for scripting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Config = 1,
    TargetMissed = 2,
    NotConverged = 3,
    ValidationFailed = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            status: Status::Config,
            message: message.into(),
        }
    }

    pub fn numeric(e: impl Into<backflow_core::Error>) -> Self {
        let e = e.into();
        let message = match e.nonconverged_at() {
            Some(t) => format!("not converged at t = {t:e}: {e}"),
            None => e.to_string(),
        };
        Self {
            status: Status::NotConverged,
            message,
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut c = match &common.config {
        Some(p) => RunConfig::load(p)
            .map_err(|e| Failure::config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    for w in &c.warnings {
        eprintln!("warning: {w}");
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<Status, Failure> {
    match cli.command {
        Command::Design { common, out } => {
            let c = load(&common)?;
            commands::design(&c, out)
        }
        Command::Simulate {
            common,
            potential,
            out,
        } => {
            let c = load(&common)?;
            commands::simulate(&c, potential, out)
        }
        Command::Validate {
            common,
            potential,
            out,
            skip,
        } => {
            let c = load(&common)?;
            checks::validate(&c, potential, out, &skip)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(s) => ExitCode::from(s as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.status as u8)
        }
    }
}
