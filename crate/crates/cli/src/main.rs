//! `erl` — early academic-risk prediction toolkit.
//!
//! Subcommands: `gen` (synthetic cohorts), `extract` (behavioral features),
//! `train` (lr / cnn / mtl / zero-rule / one-rule-svm), `eval` (metrics,
//! fairness, transitions), and `bench` (the whole battery, hashed into a
//! reproducible manifest). Log level comes from the `ERL_LOG` env var.

mod cohort_io;
mod commands;
mod errors;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{Approach, TrainArgs};

#[derive(Parser)]
#[command(name = "erl", version, about = "Early academic-risk prediction toolkit")]
struct Cli {
    /// Parallelism cap for folds, repeats, and per-participant work.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort from a config file.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract daily behavioral features from a cohort directory.
    Extract {
        #[arg(long)]
        cohort: PathBuf,
        /// Place map; defaults to places.json inside the cohort directory.
        #[arg(long)]
        places: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one approach on extracted features.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Self-report table for the LR feature set.
        #[arg(long)]
        self_reports: Option<PathBuf>,
        #[arg(long, value_enum)]
        approach: Approach,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluation cohort features (mtl only).
        #[arg(long)]
        features_b: Option<PathBuf>,
        /// Evaluation cohort labels (mtl only); current labels are sealed.
        #[arg(long)]
        labels_b: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score predictions: metrics, fairness records, transitions.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Exit 5 when any fairness record falls outside the reasonable range.
        #[arg(long)]
        gate_fairness: bool,
    },
    /// Run the full battery on a small paired cohort, hashed into a manifest.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn real_main() -> errors::CliResult<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| errors::CliError::Config(format!("--jobs: {e}")))?;
    }
    match &cli.command {
        Command::Gen { config, out, seed } => commands::cmd_gen(config, out, *seed),
        Command::Extract {
            cohort,
            places,
            config,
            out,
        } => commands::cmd_extract(cohort, places.as_deref(), config.as_deref(), out),
        Command::Train {
            features,
            labels,
            self_reports,
            approach,
            config,
            features_b,
            labels_b,
            out,
            seed,
        } => commands::cmd_train(TrainArgs {
            features_dir: features,
            labels_path: labels,
            self_reports_path: self_reports.as_deref(),
            approach: *approach,
            config_path: config.as_deref(),
            features_b_dir: features_b.as_deref(),
            labels_b_path: labels_b.as_deref(),
            out,
            seed: *seed,
        }),
        Command::Eval {
            predictions,
            labels,
            out,
            gate_fairness,
        } => commands::cmd_eval(predictions, labels, out, *gate_fairness),
        Command::Bench { config, out, seed } => commands::cmd_bench(config.as_deref(), out, *seed),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ERL_LOG", "info")).init();
    match real_main() {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
