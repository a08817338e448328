use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use descn::cli::{
    cmd_evaluate, cmd_experiment, cmd_generate, cmd_train, EvaluateArgs, ExperimentArgs,
    GenerateArgs, TrainArgs,
};

/// Uplift modeling with entire-space cross networks.
#[derive(Parser)]
#[command(name = "descn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test tables with ground-truth effects.
    Generate {
        /// Preset name: balanced | imbalanced_biased.
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for train.csv, test.csv, manifest.txt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Train one model on a table file.
    Train {
        /// Training table (CSV).
        #[arg(long)]
        train: PathBuf,
        /// Model kind: tarnet | esn_tarnet | x_network | esn_only | descn.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for model.txt and history.csv.
        #[arg(long)]
        out: PathBuf,
        /// Schema file for non-default column names.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Hyper-parameter file (train.* / model.<kind>.* keys).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Effect-score mode: head_diff | pte | esn_ratio.
        #[arg(long)]
        ite_mode: Option<String>,
    },
    /// Score a trained model on a test table.
    Evaluate {
        /// Model file written by `train`.
        #[arg(long)]
        params: PathBuf,
        /// Test table (CSV).
        #[arg(long)]
        test: PathBuf,
        /// Output directory for metrics.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        ite_mode: Option<String>,
    },
    /// Run a repeated multi-model experiment from a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for aggregate.csv, cells.csv, report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> descn::Result<()> {
    match cli.command {
        Command::Generate {
            preset,
            seed,
            out,
            n_train,
            n_test,
        } => cmd_generate(&GenerateArgs {
            preset,
            seed,
            out,
            n_train,
            n_test,
        }),
        Command::Train {
            train,
            model,
            seed,
            out,
            schema,
            config,
            ite_mode,
        } => cmd_train(&TrainArgs {
            train,
            model,
            seed,
            out,
            schema,
            config,
            ite_mode,
        }),
        Command::Evaluate {
            params,
            test,
            out,
            schema,
            ite_mode,
        } => cmd_evaluate(&EvaluateArgs {
            params,
            test,
            out,
            schema,
            ite_mode,
        })
        .map(|_| ()),
        Command::Experiment { config, out } => {
            cmd_experiment(&ExperimentArgs { config, out }).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
