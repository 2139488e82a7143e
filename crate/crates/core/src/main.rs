use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::error;

use phasefield_control::config::RunConfig;
use phasefield_control::scenario::{run_scenario, Mode, Outcome};
use phasefield_control::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Optimize,
    Audit,
    GradientCheck,
}

/// Optimal control of the Caginalp phase-field system.
///
/// Exit codes: 0 success, 2 configuration error, 3 solver failure,
/// 4 audit failure. The log level is read from PFCONTROL_LOG.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    mode: Cmd,
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Shape(_) | Error::Unsupported(_) | Error::Io(_) => 2,
        Error::Domain { .. } | Error::Numerical(_) | Error::StepFailure { .. } => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PFCONTROL_LOG", "info")).init();
    let cli = Cli::parse();
    let mode = match cli.mode {
        Cmd::Simulate => Mode::Simulate,
        Cmd::Optimize => Mode::Optimize,
        Cmd::Audit => Mode::Audit,
        Cmd::GradientCheck => Mode::GradientCheck,
    };

    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            error!("cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let base = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    let mut cfg = match RunConfig::parse_str(&text, &base) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| base.join(&cfg.output.dir));

    match run_scenario(&cfg, &text, mode, &out) {
        Ok(summary) => match summary.outcome {
            Outcome::Ok => ExitCode::SUCCESS,
            Outcome::AuditFailed(names) => {
                error!("{} failed: {}", mode.name(), names.join(", "));
                ExitCode::from(4)
            }
        },
        Err(e) => {
            error!("{} failed: {e}", mode.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
