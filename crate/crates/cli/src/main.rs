use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hsd_core::spectrum::EigenMethod;
use hsdop::commands::{self, SplitName};
use hsdop::{thread_cap, CliResult, Overrides, RunConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hsdop", version, about = "Hodge spectral duality operators on simplicial complexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Counts, Euler characteristic, leading eigenvalues and Betti numbers.
    Analyze {
        /// Generator (`torus:8,8`, `icosphere:1`, `cycle:5`, `tetgrid:3`) or mesh path.
        complex: String,
        /// Degrees whose eigenvalues are listed (default all).
        #[arg(long, value_delimiter = ',')]
        degrees: Option<Vec<usize>>,
        #[arg(long, default_value_t = 8)]
        modes: usize,
        /// Expected Betti numbers; exit code 2 when they differ.
        #[arg(long, value_delimiter = ',')]
        expect: Option<Vec<usize>>,
    },
    /// Hodge decomposition of a cochain file into exact, coexact and harmonic parts.
    Decompose {
        complex: String,
        /// JSON `{degree, complex_hash, values}`.
        cochain: PathBuf,
        #[arg(long, default_value = "decomposition")]
        out: PathBuf,
    },
    /// Leading eigenpairs of the Hodge Laplacian in one degree.
    Spectrum {
        complex: String,
        #[arg(long)]
        degree: usize,
        #[arg(long, default_value_t = 16)]
        modes: usize,
        #[arg(long, value_parser = parse_method, default_value = "auto")]
        method: EigenMethod,
    },
    /// Generates and stores the dataset of a run config.
    GenData(RunArgs),
    /// Trains a model; writes checkpoint, history CSV and report.
    Train(RunArgs),
    /// Evaluates a checkpoint on one split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// CSV of eigenvalue and mean spectral energy of prediction and target per mode.
    SpectralEnergy {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Use targets as predictions (no checkpoint needed).
        #[arg(long)]
        passthrough: bool,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run config (JSON with a `version` field).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

impl RunArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        self.overrides.apply(RunConfig::load(&self.config)?)
    }
}

fn parse_method(s: &str) -> Result<EigenMethod, String> {
    match s {
        "auto" => Ok(EigenMethod::Auto),
        "dense" => Ok(EigenMethod::Dense),
        "shift_invert" | "shift-invert" => Ok(EigenMethod::ShiftInvert),
        _ => Err(format!("unknown method '{s}' (auto, dense, shift_invert)")),
    }
}

fn print<T: Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    thread_cap()?;
    match cli.command {
        Command::Analyze { complex, degrees, modes, expect } => {
            let report = commands::analyze(&complex, degrees.as_deref(), modes)?;
            print(&report)?;
            if let Some(e) = expect {
                report.check(&e)?;
            }
        }
        Command::Decompose { complex, cochain, out } => print(&commands::decompose(&complex, &cochain, &out)?)?,
        Command::Spectrum { complex, degree, modes, method } => {
            print(&commands::spectrum(&complex, degree, modes, method)?)?
        }
        Command::GenData(args) => print(&commands::gen_data(&args.resolve()?)?)?,
        Command::Train(args) => print(&commands::train(&args.resolve()?)?.2)?,
        Command::Eval { run, checkpoint, split } => {
            print(&commands::eval(&run.resolve()?, checkpoint.as_deref(), split)?)?
        }
        Command::SpectralEnergy { run, checkpoint, split, passthrough } => {
            print!("{}", commands::spectral_energy(&run.resolve()?, checkpoint.as_deref(), split, passthrough)?)
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
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

