use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use risra_cli::{
    cmd_simulate, cmd_solve, cmd_sweep, cmd_validate, ensure_lambda_source, exit_code, print_checks, RunManifest,
    ThresholdSource, EXIT_CONFIG, EXIT_FAILURE,
};
use risra_core::{Settings, StrategyKind};

#[derive(Parser)]
#[command(
    name = "risra",
    version,
    about = "RIS-aided random access: threshold solver and frame simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Frame seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write a JSON manifest of the run.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the maximal-throughput threshold and write it as JSON.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        strategy: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate frames and append one CSV row.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        strategy: String,
        #[arg(long)]
        frames: Option<u64>,
        /// Threshold in bit/s/Hz.
        #[arg(long, conflicts_with = "solution")]
        lambda: Option<f64>,
        /// Solution file written by `solve`.
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and simulate strategies over the configured grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated strategy tags; defaults to all.
        #[arg(long, value_delimiter = ',')]
        strategy: Vec<String>,
        #[arg(long)]
        frames: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the configured system against independent oracles.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn settings(common: &Common, frames: Option<u64>) -> anyhow::Result<Settings> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let mut s = Settings::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(n) = frames {
        s.n_frames = n;
    }
    s.system()?;
    Ok(s)
}

fn manifest(common: &Common, command: &str, s: &Settings) -> anyhow::Result<()> {
    if let Some(path) = &common.manifest {
        RunManifest::new(command, s).write(path)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Solve { common, strategy, out } => {
            let s = settings(&common, None)?;
            let kind: StrategyKind = strategy.parse()?;
            let sol = cmd_solve(&s, kind, out.as_deref())?;
            manifest(&common, "solve", &s)?;
            eprintln!(
                "{kind}: lambda* = {:.6} bit/s/Hz after {} iterations (|G| = {:.3e})",
                sol.lambda_star, sol.iterations, sol.residual
            );
        }
        Command::Simulate {
            common,
            strategy,
            frames,
            lambda,
            solution,
            out,
        } => {
            let s = settings(&common, frames)?;
            let kind: StrategyKind = strategy.parse()?;
            let threshold = match (lambda, solution) {
                (Some(v), _) => ThresholdSource::Value(v),
                (None, Some(p)) => ThresholdSource::Solution(p),
                (None, None) => ThresholdSource::None,
            };
            ensure_lambda_source(kind, &threshold)?;
            let rep = cmd_simulate(&s, kind, &threshold, out.as_deref())?;
            manifest(&common, "simulate", &s)?;
            eprintln!(
                "{kind}: throughput {:.6} ± {:.6} bit/s/Hz over {} frames (seed {})",
                rep.throughput, rep.ci_half_width, rep.n_frames, rep.seed
            );
        }
        Command::Sweep {
            common,
            strategy,
            frames,
            out,
        } => {
            let s = settings(&common, frames)?;
            let kinds = if strategy.is_empty() {
                StrategyKind::ALL.to_vec()
            } else {
                strategy
                    .iter()
                    .map(|t| t.parse())
                    .collect::<Result<Vec<StrategyKind>, _>>()?
            };
            let rows = cmd_sweep(&s, &kinds, out.as_deref())?;
            manifest(&common, "sweep", &s)?;
            eprintln!("{} rows", rows.len());
        }
        Command::Validate { common } => {
            let s = settings(&common, None)?;
            println!("seed {}", s.seed);
            let ok = print_checks(&cmd_validate(&s)?);
            manifest(&common, "validate", &s)?;
            return Ok(if ok { 0 } else { EXIT_FAILURE });
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
