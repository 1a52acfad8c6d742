//! `mpoisson`: command-line front end for the Poisson-equation solvers.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure.

mod commands;
mod model;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use markov_poisson::Error;

use model::{AnchorSpec, LoadedModel, ModelFile};
use output::OutputWriter;

#[derive(Parser)]
#[command(
    name = "mpoisson",
    about = "Matrix-analytic solvers for Poisson's equation of Markov chains",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Model file path, or `example <name>` for a built-in model
    /// (map-g1-neg, scalar-gig1).
    #[arg(num_args = 1..=2, required = true)]
    model: Vec<String>,
    /// Fixed-point stopping threshold (default 1e-4).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of retained levels for infinite models (default 50).
    #[arg(long)]
    max_levels: Option<usize>,
    /// Anchor state: a flat index or `level,phase`.
    #[arg(long)]
    anchor: Option<String>,
    /// Output directory for the CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for the oracle simulations.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary vector of the chain.
    Stationary(RunArgs),
    /// Solution matrix of Poisson's equation with its residual.
    Poisson(RunArgs),
    /// Deviation matrix D (aperiodic discrete-time chains).
    Deviation(RunArgs),
    /// Anchored solution K with a zero row at the anchor.
    Kmatrix(RunArgs),
    /// Full pipeline: stationary vector, solution, D, K, f_D, f_K.
    Solve(RunArgs),
    /// Oracle cross-checks; exits nonzero when a check fails.
    Verify(RunArgs),
    /// Write the parsed model back out as model.json.
    Export(RunArgs),
}

fn resolve_model(tokens: &[String]) -> Result<ModelFile, Error> {
    match tokens {
        [path] => ModelFile::from_path(Path::new(path)),
        [keyword, name] if keyword == "example" => model::builtin(name),
        _ => Err(Error::InvalidInput(
            "model must be a file path or `example <name>`".into(),
        )),
    }
}

fn parse_anchor(raw: &str) -> Result<AnchorSpec, Error> {
    if let Some((level, phase)) = raw.split_once(',') {
        let level: usize = level
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad anchor level {level:?}")))?;
        let phase: usize = phase
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad anchor phase {phase:?}")))?;
        Ok(AnchorSpec::LevelPhase([level, phase]))
    } else {
        let index: usize = raw
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad anchor {raw:?}")))?;
        Ok(AnchorSpec::Index(index))
    }
}

fn load(args: &RunArgs) -> Result<(ModelFile, LoadedModel), Error> {
    let mut file = resolve_model(&args.model)?;
    if let Some(raw) = &args.anchor {
        file.anchor = Some(parse_anchor(raw)?);
    }
    if args.epsilon.is_some() || args.max_levels.is_some() {
        let mut spec = file.config.take().unwrap_or_default();
        if let Some(eps) = args.epsilon {
            spec.epsilon = Some(eps);
        }
        if let Some(levels) = args.max_levels {
            spec.max_levels = Some(levels);
        }
        file.config = Some(spec);
    }
    let loaded = file.load()?;
    Ok((file, loaded))
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Stationary(args) => {
            let (_, loaded) = load(&args)?;
            commands::stationary(&loaded, &OutputWriter::new(&args.out)?)?;
            Ok(0)
        }
        Command::Poisson(args) => {
            let (_, loaded) = load(&args)?;
            commands::poisson_cmd(&loaded, &OutputWriter::new(&args.out)?)?;
            Ok(0)
        }
        Command::Deviation(args) => {
            let (_, loaded) = load(&args)?;
            commands::deviation(&loaded, &OutputWriter::new(&args.out)?)?;
            Ok(0)
        }
        Command::Kmatrix(args) => {
            let (_, loaded) = load(&args)?;
            commands::kmatrix(&loaded, &OutputWriter::new(&args.out)?)?;
            Ok(0)
        }
        Command::Solve(args) => {
            let (_, loaded) = load(&args)?;
            commands::solve(&loaded, &OutputWriter::new(&args.out)?)?;
            Ok(0)
        }
        Command::Verify(args) => {
            let (_, loaded) = load(&args)?;
            let failures = commands::verify(&loaded, args.seed.unwrap_or(0))?;
            if failures > 0 {
                eprintln!("{failures} check(s) failed");
                Ok(3)
            } else {
                eprintln!("all checks passed");
                Ok(0)
            }
        }
        Command::Export(args) => {
            let (file, _) = load(&args)?;
            commands::export(&file.to_json(), &OutputWriter::new(&args.out)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_validation() { 2 } else { 3 })
        }
    }
}
