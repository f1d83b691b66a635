//! Command-line front end composing the target-geometry library into
//! reproducible seeded experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 PASS/FAIL table failures under `--strict`.

mod commands;
mod config;
mod plot;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{KeyValues, OutputFormat};

/// CLI-level error split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: unknown keys, parse failures, bounds.
    Config(String),
    /// The computation itself rejected the inputs (degeneracies,
    /// divergence, non-finite states).
    Numerical(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl From<tglab_core::Error> for CliError {
    fn from(e: tglab_core::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "tglab",
    version,
    about = "Seeded numerical experiments on prediction-target geometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form risk curves and effective ranks over a time grid.
    Geometry(RunArgs),
    /// Monte Carlo validation of every closed form, with PASS/FAIL bands.
    McValidate(RunArgs),
    /// Matched clean-vs-velocity probe training.
    Probe(RunArgs),
    /// Probability-flow pushforward evaluation with Heun integration.
    Sample(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file (one `key = value` per line; see README for keys).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Random seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; overrides the config file and TGLAB_OUT.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Primary output format.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,

    /// Exit with status 4 if any PASS/FAIL row fails.
    #[arg(long)]
    strict: bool,

    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl RunArgs {
    /// Merges config file, --set overrides, and dedicated flags (highest
    /// precedence last).
    fn resolve(&self) -> Result<KeyValues, CliError> {
        let mut kv = match &self.config {
            Some(path) => KeyValues::load(path)?,
            None => KeyValues::default(),
        };
        for entry in &self.sets {
            let Some((key, value)) = entry.split_once('=') else {
                return Err(CliError::config(format!(
                    "--set expects KEY=VALUE, got '{entry}'"
                )));
            };
            kv.set(key.trim(), value.trim().to_string());
        }
        if let Some(seed) = self.seed {
            kv.set("seed", seed.to_string());
        }
        if let Some(out) = &self.out {
            kv.set("out", out.display().to_string());
        }
        if let Some(format) = self.format {
            kv.set("format", format.to_string());
        }
        if self.strict {
            kv.set("strict", "true".to_string());
        }
        Ok(kv)
    }
}

type Runner = fn(&KeyValues) -> Result<commands::Outcome, CliError>;

fn run(cli: &Cli) -> Result<commands::Outcome, CliError> {
    let (args, runner): (&RunArgs, Runner) =
        match &cli.command {
            Command::Geometry(args) => (args, commands::geometry::run),
            Command::McValidate(args) => (args, commands::mc_validate::run),
            Command::Probe(args) => (args, commands::probe::run),
            Command::Sample(args) => (args, commands::sample::run),
        };
    let kv = args.resolve()?;
    runner(&kv)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
            if outcome.failed_checks > 0 {
                eprintln!("{} check(s) FAILED", outcome.failed_checks);
                if outcome.strict {
                    return ExitCode::from(4);
                }
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}
