//! `codesign`: generate plants, synthesize dense LQR, run the co-design EA,
//! analyze runs and reproduce the reference experiments.
//!
//! Exit codes: 0 on success, 2 for usage and input errors, 3 for numerical or
//! degenerate failures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codesign_core::experiment::ExperimentId;

use crate::config::PlantKind;

#[derive(Parser)]
#[command(name = "codesign", version, about = "Sparse LQR co-design by evolutionary pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a swing-equation plant and write it as JSON.
    GenPlant(GenPlantArgs),
    /// Solve the dense LQR problem for a plant.
    SolveLqr(SolveLqrArgs),
    /// Run the evolutionary co-design.
    RunEa(Box<RunEaArgs>),
    /// Compute convergence and stability certificates for a finished run.
    Analyze(AnalyzeArgs),
    /// Prune the dense gain of a plant and repair it.
    RepairDemo(RepairDemoArgs),
    /// Run a named experiment over several seeds and summarize it.
    Repro(ReproArgs),
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct PlantArgs {
    #[arg(long, value_enum)]
    pub kind: Option<PlantKind>,
    #[arg(long, value_parser = positive)]
    pub rows: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub cols: Option<usize>,
    /// Seed of the plant generator.
    #[arg(long = "plant-seed")]
    pub plant_seed: Option<u64>,
    /// Rescale the open-loop spectral radius.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Args)]
pub struct GenPlantArgs {
    #[arg(long, value_enum, default_value = "grid")]
    pub kind: PlantKind,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub rows: usize,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub cols: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SolveLqrArgs {
    #[arg(long)]
    pub plant: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunEaArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Plant JSON; otherwise the plant is generated from the plant flags.
    #[arg(long)]
    pub plant: Option<PathBuf>,
    #[command(flatten)]
    pub plant_args: PlantArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// First EA seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of sub-runs with consecutive seeds.
    #[arg(long, value_parser = positive)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub elites: Option<usize>,
    #[arg(long)]
    pub crossover_prob: Option<f64>,
    #[arg(long)]
    pub mutation_prob: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub mutation_range: Option<usize>,
    #[arg(long)]
    pub w_a: Option<f64>,
    #[arg(long)]
    pub w_s: Option<f64>,
    #[arg(long)]
    pub w_c: Option<f64>,
    /// Repair unstable genes before scoring them.
    #[arg(long)]
    pub repair: bool,
    #[arg(long)]
    pub repair_target: Option<f64>,
    #[arg(long)]
    pub repair_max_iter: Option<usize>,
    /// Also score the dense and diagonal LQR baselines.
    #[arg(long)]
    pub baselines: bool,
    /// Also score intermediate magnitude truncations of the dense gain.
    #[arg(long)]
    pub extra_baselines: bool,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Directory written by `run-ea`.
    #[arg(long)]
    pub run: PathBuf,
    /// Output directory; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sublevel factor c of the set {J <= c J_dense} used for the Lipschitz estimate.
    #[arg(long, default_value_t = 10.0)]
    pub sublevel: f64,
    #[arg(long, default_value_t = 40)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct RepairDemoArgs {
    #[arg(long)]
    pub plant: Option<PathBuf>,
    #[command(flatten)]
    pub plant_args: PlantArgs,
    /// Number of dense-gain entries kept before repair; defaults to half of them.
    #[arg(long, value_parser = positive)]
    pub ell: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    pub target: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReproArgs {
    #[arg(value_parser = parse_experiment)]
    pub experiment: ExperimentId,
    #[arg(long, value_parser = positive)]
    pub seeds: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub first_seed: u64,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long, default_value = "repro")]
    pub out: PathBuf,
    #[arg(long)]
    pub extra_baselines: bool,
}

fn parse_experiment(s: &str) -> Result<ExperimentId, String> {
    s.parse().map_err(|e: codesign_core::Error| e.to_string())
}

/// 3 for numerical failures from the library, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|c| c.downcast_ref::<codesign_core::Error>().is_some_and(|e| e.is_numerical()));
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::configure_threads().and_then(|()| match cli.command {
        Command::GenPlant(a) => commands::gen_plant(a),
        Command::SolveLqr(a) => commands::solve_lqr(a),
        Command::RunEa(a) => commands::run_ea(*a),
        Command::Analyze(a) => commands::analyze(a),
        Command::RepairDemo(a) => commands::repair_demo(a),
        Command::Repro(a) => commands::repro(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
