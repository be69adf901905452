//! `relx`: exceptional-object detection for object-relational data from
//! the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or reference error,
//! 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod pipeline;

#[derive(Parser)]
#[command(
    name = "relx",
    version,
    about = "Detect exceptional objects in object-relational data with Bayesian-network likelihood scores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Inputs shared by every model-based command.
#[derive(Args, Debug)]
struct ModelArgs {
    /// Grounding table (RFC-4180 CSV with a header row).
    #[arg(long)]
    data: PathBuf,

    /// Schema document describing the CSV columns.
    #[arg(long)]
    schema: PathBuf,

    /// Structure file (`Parent -> Child` lines) or a fitted model file
    /// written by `relx fit`.
    #[arg(long)]
    structure: Option<PathBuf>,

    /// Learn the structure greedily instead of reading it from a file.
    #[arg(long, conflicts_with = "structure")]
    learn: bool,

    /// Parent limit for `--learn`.
    #[arg(long, default_value_t = 2)]
    max_parents: usize,

    /// Laplace pseudocount for parameter fitting.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,

    /// Override every continuous column's bin count.
    #[arg(long)]
    bins: Option<usize>,

    /// Object variable to analyse; defaults to the schema's first
    /// object-variable column.
    #[arg(long)]
    var: Option<String>,

    /// Worker threads for per-object scoring.
    #[arg(long, env = "RELX_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: data CSV, schema, and labels.
    Generate {
        /// One of: high-correlation, low-correlation, single-feature.
        #[arg(long)]
        scenario: String,

        /// Normal player count.
        #[arg(long, default_value_t = 240)]
        normal: usize,

        /// Outlier player count.
        #[arg(long, default_value_t = 40)]
        outlier: usize,

        /// Matches per player.
        #[arg(long, default_value_t = 38)]
        matches: usize,

        /// PRNG seed; reruns with the same seed are byte-identical.
        #[arg(long, default_value_t = 0)]
        seed: u64,

        #[arg(long)]
        out: PathBuf,
    },

    /// Fit class-level parameters and persist the model.
    Fit {
        #[command(flatten)]
        model: ModelArgs,

        #[arg(long)]
        out: PathBuf,
    },

    /// Rank all objects by outlier score, one CSV per metric.
    Rank {
        #[command(flatten)]
        model: ModelArgs,

        /// Metrics: LD, ABS_LR, LR, LR_PLUS, FD, LOG, KNN. Repeatable or
        /// comma-separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![String::from("LD")])]
        metric: Vec<String>,

        /// Objects with fewer rows are skipped.
        #[arg(long, default_value_t = 5)]
        min_rows: usize,

        /// Neighbor count for the KNN baseline.
        #[arg(long, default_value_t = 10)]
        knn_k: usize,

        #[arg(long)]
        out: PathBuf,
    },

    /// Full score report for a single object.
    Score {
        #[command(flatten)]
        model: ModelArgs,

        /// Object identifier to score.
        #[arg(long)]
        target: String,

        #[arg(long, value_delimiter = ',', default_values_t = vec![String::from("LD")])]
        metric: Vec<String>,

        #[arg(long)]
        out: PathBuf,
    },

    /// Precision-at-cutoff and AUC against a labels file.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,

        /// Labels CSV (`id,label` with normal/outlier).
        #[arg(long)]
        labels: PathBuf,

        #[arg(long, value_delimiter = ',', default_values_t = vec![String::from("LD")])]
        metric: Vec<String>,

        /// Top-percent cutoffs in (0, 100].
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 5.0])]
        cutoff: Vec<f64>,

        #[arg(long, default_value_t = 5)]
        min_rows: usize,

        #[arg(long, default_value_t = 10)]
        knn_k: usize,

        #[arg(long)]
        out: PathBuf,
    },

    /// Drill-down reports for the top-ranked objects under LD.
    Explain {
        #[command(flatten)]
        model: ModelArgs,

        /// How many top objects to explain.
        #[arg(long, default_value_t = 3)]
        top: usize,

        #[arg(long, default_value_t = 5)]
        min_rows: usize,

        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            scenario,
            normal,
            outlier,
            matches,
            seed,
            out,
        } => commands::generate(&scenario, normal, outlier, matches, seed, &out),
        Command::Fit { model, out } => commands::fit(&model, &out),
        Command::Rank {
            model,
            metric,
            min_rows,
            knn_k,
            out,
        } => commands::rank(&model, &metric, min_rows, knn_k, &out),
        Command::Score {
            model,
            target,
            metric,
            out,
        } => commands::score(&model, &target, &metric, &out),
        Command::Evaluate {
            model,
            labels,
            metric,
            cutoff,
            min_rows,
            knn_k,
            out,
        } => commands::evaluate(&model, &labels, &metric, &cutoff, min_rows, knn_k, &out),
        Command::Explain {
            model,
            top,
            min_rows,
            out,
        } => commands::explain(&model, top, min_rows, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("relx: {err}");
            ExitCode::from(err.code())
        }
    }
}
