//! `charb`: runs character randomized benchmarking experiments and writes
//! plot-ready reports.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use charb_core::CharbError;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{FileConfig, Overrides, Resolved, SweepKind};
use output::OutDir;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl From<CharbError> for CliError {
    fn from(e: CharbError) -> Self {
        match e {
            CharbError::Fit(_) => CliError::Numerical(format!(
                "{e}; the data may not resolve the decay, try more sequences or explicit lengths"
            )),
            _ if e.is_config_error() => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "charb", version, about = "Character randomized benchmarking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "charb-out")]
    out: PathBuf,
    /// Seed; falls back to the config file, then CHARB_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Total sequences per plan.
    #[arg(long)]
    sequences: Option<usize>,
    /// Overwrite an existing report.
    #[arg(long)]
    force: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Subspace RB on the two-qubit group: fidelity and extended sub-fidelity.
    Subspace(RunArgs),
    /// Leakage RB: leakage and seepage rates.
    Leakage(RunArgs),
    /// Matchgate RB on n qubits.
    Matchgate {
        /// Number of qubits.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compile a rotation matrix into a nearest-neighbour matchgate circuit.
    CompileMatchgate {
        /// Rotation file: one matrix row per line.
        #[arg(long)]
        input: PathBuf,
        /// Circuit file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Irrep table, multiplicity checks and 2-design report for a group.
    AnalyzeGroup {
        /// subspace, leakage, qubit_leakage, qutrit_clifford or matchgate:n=<n>
        id: String,
        /// Random operator triples for the 2-design check.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Scatter study over a channel ensemble.
    Sweep(RunArgs),
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_experiment(name: &str, run: RunArgs, n: Option<usize>) -> Result<(), CliError> {
    if let Some(t) = run.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {t} threads: {e}")))?;
    }
    let file = match &run.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ov = Overrides { seed: run.seed, total_sequences: run.sequences, n };
    let cfg = Resolved::new(name, file, &ov)?;
    let out = OutDir::prepare(&run.out, run.force)?;
    let start = Instant::now();
    match name {
        "subspace" => commands::experiment(SweepKind::Subspace, &cfg, &out)?,
        "leakage" => commands::experiment(SweepKind::Leakage, &cfg, &out)?,
        "matchgate" => commands::experiment(SweepKind::Matchgate, &cfg, &out)?,
        _ => commands::sweep(&cfg, &out)?,
    }
    out.write_json(
        "timing.json",
        &json!({ "wall_seconds": start.elapsed().as_secs_f64(), "threads": rayon::current_num_threads() }),
    )?;
    eprintln!("wrote {}", run.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Subspace(r) => run_experiment("subspace", r, None),
        Command::Leakage(r) => run_experiment("leakage", r, None),
        Command::Matchgate { n, run } => run_experiment("matchgate", run, n),
        Command::Sweep(r) => run_experiment("sweep", r, None),
        Command::CompileMatchgate { input, output } => {
            let text = commands::compile_matchgate(&input)?;
            write_text(output.as_deref(), &text)
        }
        Command::AnalyzeGroup { id, trials, seed, output } => {
            let report = commands::analyze_group(&id, trials, seed)?;
            let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numerical(e.to_string()))?;
            text.push('\n');
            write_text(output.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(m) => eprintln!("error: {m}"),
                CliError::Numerical(m) => eprintln!("numerical failure: {m}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
