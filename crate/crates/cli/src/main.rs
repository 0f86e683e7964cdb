//! `neurodeploy`: dataset generation, training and (neuro-)solving of
//! component deployment problems.
//!
//! Exit codes: 0 sat or success, 1 unsat, 2 timeout, 3 usage, 4 internal.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(
    name = "neurodeploy",
    version,
    about = "Cloud deployment planning with SMT and RGCN guidance"
)]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for labeling and bench cells.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Solver deadline in seconds (default 2400).
    #[arg(long, global = true)]
    pub deadline: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Case study name (secure-web, secure-billing, oryx2, wordpress[:n]) or
    /// an application JSON file.
    #[arg(long)]
    pub problem: String,
    /// Offer catalog: cloud20, droplet27, synthetic:<n>[:<seed>] or a JSON file.
    #[arg(long, default_value = "cloud20")]
    pub offers: String,
    /// Override the number of VM slots.
    #[arg(long)]
    pub vms: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Smt,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggArg {
    Sum,
    Mean,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label offer subsets with their optimal deployments.
    GenDataset {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Offers per subset.
        #[arg(long)]
        k: Option<usize>,
        /// Draw this many random subsets instead of enumerating all.
        #[arg(long, conflicts_with = "limit")]
        count: Option<usize>,
        /// Keep only the first subsets in lexicographic order.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Dataset JSONL; the manifest goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop over-represented labels until the Gini coefficient is below 0.3.
    Curate {
        #[arg(long)]
        dataset: PathBuf,
        /// Keep exactly these prices instead of the automatic reduction.
        #[arg(long, value_delimiter = ',')]
        keep: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an RGCN edge classifier on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long, value_enum)]
        agg: Option<AggArg>,
        /// Fraction of samples held out for the test metrics.
        #[arg(long)]
        test_ratio: Option<f64>,
        /// Per-epoch loss and accuracy CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Model checkpoint (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the soft constraints a model suggests for a problem.
    Predict {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        model: PathBuf,
        /// Write the prediction tensor as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a problem with the SMT solver alone.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Write the solution as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also keep the generated SMT-LIB script.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Solve with model predictions added as soft constraints.
    NeuroSolve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        model: PathBuf,
        /// Omit the `a = 0` soft constraints for unpredicted pairs.
        #[arg(long)]
        no_negatives: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Edge-classification metrics of a model on a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Solve every offer set plainly and with each model; write a CSV grid.
    Bench {
        #[arg(long)]
        problem: String,
        /// Offer set; repeat for several. With --subsets, the catalog to draw from.
        #[arg(long, required = true)]
        offers: Vec<String>,
        #[arg(long)]
        vms: Option<usize>,
        /// Draw this many offer subsets from a single catalog.
        #[arg(long)]
        subsets: Option<usize>,
        #[arg(long, default_value_t = 20)]
        subset_size: usize,
        /// Trained model; repeat for several.
        #[arg(long)]
        model: Vec<PathBuf>,
        /// Also train a model on the grid's own instances.
        #[arg(long)]
        overfit: bool,
        /// Save the overfit model here.
        #[arg(long, requires = "overfit")]
        save_overfit: Option<PathBuf>,
        #[arg(long)]
        no_negatives: bool,
        /// Grid CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success = 0,
    Unsat = 1,
    Timeout = 2,
}

/// Bad flags or inputs; exits with code 3.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = Config::load(cli.config.as_deref())
        .map_err(|e| anyhow::Error::new(Usage(format!("{e:#}"))))
        .and_then(|config| commands::run(&cli, &config));
    match result {
        Ok(outcome) => ExitCode::from(outcome as u8),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<Usage>() { 3 } else { 4 })
        }
    }
}

/// A closed stdout (e.g. piped into `head`) is not a failure.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}
