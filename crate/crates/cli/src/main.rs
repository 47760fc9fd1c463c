mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcb_core::{Aggregation, ClassSizes};

#[derive(Debug, Parser)]
#[command(
    name = "pcb",
    version,
    about = "Pseudo-class-balanced active prompt learning on embeddings"
)]
struct Cli {
    /// Worker threads for parallel scoring (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an active-learning experiment described by a JSON config.
    Run(RunArgs),
    /// Generate a synthetic train/test dataset pair.
    Synth(SynthArgs),
    /// Print zero-shot test accuracy of a dataset.
    Zeroshot(ZeroshotArgs),
    /// Print test accuracy of a saved model.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of runs, seeded seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub dim: usize,
    /// Train items per class: a constant, a comma list, or `powerlaw:<base>:<alpha>`.
    #[arg(long = "per-class")]
    pub per_class: ClassSizes,
    #[arg(long = "test-per-class", default_value_t = 50)]
    pub test_per_class: usize,
    #[arg(long = "sigma-img")]
    pub sigma_img: f64,
    #[arg(long = "sigma-txt")]
    pub sigma_txt: f64,
    #[arg(long, default_value_t = 1)]
    pub descriptions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ZeroshotArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "none")]
    pub aggregation: Aggregation,
    #[arg(long, default_value_t = pcb_core::model::DEFAULT_TEMPERATURE)]
    pub tau: f64,
    /// Repair rows whose norm is off instead of rejecting the dataset.
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model directory (or its model.json).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub renormalize: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(commands::EXIT_RUNTIME);
        }
    }
    let outcome = match cli.command {
        Command::Run(args) => commands::run(&args),
        Command::Synth(args) => commands::synth(&args),
        Command::Zeroshot(args) => commands::zeroshot(&args),
        Command::Eval(args) => commands::eval(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
