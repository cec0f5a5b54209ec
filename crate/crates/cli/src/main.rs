//! `agg`: runs simulations and the stability/decay/energy experiments from a
//! configuration file.
//!
//! Exit status is 0 on success, 1 for invalid input and 2 for a numerical
//! failure or a failed experiment. Errors are also reported on stderr as one
//! machine-readable line:
//!
//! ```text
//! agg-error kind=NewtonDiverged step=412 message="..."
//! ```

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agg_core::AggError;

#[derive(Parser, Debug)]
#[command(name = "agg", version, about = "Navier-Stokes-Cahn-Hilliard simulator with unmatched densities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// Configuration file.
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full simulation; writes diag.csv and snap_*.bin into --out.
    Run {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this snapshot instead of the configured initial state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Gradient flow to a constrained free-energy minimiser.
    Equilibrate {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Directory for the minimiser snapshot (steady.bin).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stability experiment around the minimiser reached from the configured seed.
    Lyapunov {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        eta1: Option<f64>,
        #[arg(long)]
        eta2: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        /// Overrides scheme.t_end.
        #[arg(long)]
        t_end: Option<f64>,
        /// Directory for lyapunov.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Power-law fit y ~ (1 + t)^-alpha on a CSV column.
    DecayFit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "y")]
        column: String,
        #[arg(long, default_value = "t")]
        time_column: String,
        /// Fit window as `start,end`; default is the second half of the record.
        #[arg(long, value_parser = commands::parse_window)]
        window: Option<(f64, f64)>,
    },
    /// Budget residual under dt refinement.
    EnergyAudit {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Comma-separated time steps; default experiment.dts.
        #[arg(long, value_delimiter = ',')]
        dts: Vec<f64>,
        /// Directory for audit.csv and the per-dt diagnostics; default is the
        /// directory of the configuration file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mixed-norm regularity integrals over the snapshots of a run directory.
    Regularity {
        /// Run directory holding snap_*.bin.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        r: f64,
    },
}

/// Outcome of a command that ran to completion.
pub enum Outcome {
    Ok,
    /// The computation finished but the experiment's criterion failed.
    Failed(String),
}

fn init_threads() -> Result<(), AggError> {
    let Ok(v) = std::env::var("AGG_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| AggError::Validation {
        key: "AGG_THREADS".into(),
        reason: format!("expected a positive integer, got `{v}`"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| AggError::Validation { key: "AGG_THREADS".into(), reason: e.to_string() })
}

fn report_error(e: &AggError) -> ExitCode {
    let step = match e {
        AggError::AtStep { step, .. } => step.to_string(),
        _ => "-".into(),
    };
    let msg = e.to_string().replace('"', "'");
    eprintln!("agg-error kind={} step={step} message=\"{msg}\"", e.kind());
    ExitCode::from(if e.is_validation() { 1 } else { 2 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        return report_error(&e);
    }
    let result = match cli.command {
        Command::Run { cfg, out, resume } => commands::run(&cfg.config, &out, resume.as_deref()),
        Command::Equilibrate { cfg, out } => commands::equilibrate(&cfg.config, out.as_deref()),
        Command::Lyapunov { cfg, eta1, eta2, eps, t_end, out } => {
            commands::lyapunov(&cfg.config, eta1, eta2, eps, t_end, out.as_deref())
        }
        Command::DecayFit { csv, column, time_column, window } => {
            commands::decay_fit(&csv, &column, &time_column, window)
        }
        Command::EnergyAudit { cfg, dts, out } => commands::energy_audit(&cfg.config, &dts, out.as_deref()),
        Command::Regularity { dir, q, r } => commands::regularity(&dir, q, r),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed(why)) => {
            eprintln!("agg-error kind=ExperimentFailed step=- message=\"{why}\"");
            ExitCode::from(2)
        }
        Err(e) => report_error(&e),
    }
}
