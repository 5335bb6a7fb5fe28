use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use specreg::cli::commands::{self, emit, output_dir};
use specreg::cli::presets::{self, PRESET_NAMES};
use specreg::cli::{Artifacts, CliError, ExperimentConfig, Overrides};
use specreg::evaluation::Execution;

#[derive(Parser)]
#[command(name = "specreg", version, about = "Data-driven spectral regularization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config by name (see `specreg presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config replication count.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Penalty table `g,alpha,D,mu,qcirc,pen`.
    Penalty(Common),
    /// Select α for observed coefficients (CSV `k,y`).
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Noise level; overrides the config.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Monte Carlo report and risk curves.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Run replications on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// Run the invariant suites.
    Verify(Common),
    /// Eigenvalues of AᵀA for a design matrix CSV.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// List built-in configs, or print one as JSON.
    Presets { name: Option<String> },
}

/// Effective config (overrides applied) and output directory.
fn load(common: &Common, sigma: Option<f64>) -> Result<(ExperimentConfig, Option<PathBuf>), CliError> {
    let raw = match (&common.config, &common.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => presets::preset(name)
            .ok_or_else(|| CliError::Validation(format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", "))))?,
        (None, None) => return Err(CliError::Validation("one of --config or --preset is required".into())),
    };
    let out = output_dir(common.out.clone(), Some(&raw));
    Ok((Overrides { seed: common.seed, reps: common.reps, sigma }.apply(&raw), out))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (artifacts, out): (Artifacts, Option<PathBuf>) = match cli.command {
        Command::Penalty(common) => {
            let (c, out) = load(&common, None)?;
            (commands::penalty(&c)?, out)
        }
        Command::Select { common, data, sigma } => {
            let (c, out) = load(&common, sigma)?;
            (commands::select(&c, &data)?, out)
        }
        Command::Simulate { common, serial } => {
            let (c, out) = load(&common, None)?;
            let exec = if serial { Execution::Serial } else { Execution::Parallel };
            (commands::simulate(&c, exec)?, Some(out.unwrap_or_else(|| PathBuf::from("."))))
        }
        Command::Verify(common) => {
            let (c, out) = load(&common, None)?;
            (commands::verify(&c)?, out)
        }
        Command::Decompose { common, data } => {
            let (config, out) = if common.config.is_some() || common.preset.is_some() {
                let (c, out) = load(&common, None)?;
                (Some(c), out)
            } else {
                (None, common.out.clone())
            };
            (commands::decompose(config.as_ref(), data.as_deref())?, out)
        }
        Command::Presets { name: None } => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            return Ok(());
        }
        Command::Presets { name: Some(name) } => {
            let c = presets::preset(&name).ok_or_else(|| CliError::Validation(format!("unknown preset {name:?}")))?;
            println!("{}", serde_json::to_string_pretty(&c.to_json()).expect("config serializes"));
            return Ok(());
        }
    };
    emit(&artifacts, out.as_deref())?;
    match artifacts.failure {
        Some(msg) => Err(CliError::Invariant(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the validation status
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
