//! `dsdiff`: data preparation, training, generation and evaluation for
//! style-guided diffusion on time-series windows.

mod commands;
mod config;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dsdiff", version, about = "Style-guided diffusion for time-series windows")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts and the provenance log.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic sine dataset.
    GenData {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        features: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Window and normalize a delimited text file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Zero-based feature columns, comma separated.
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the diffusion backbone.
    TrainBackbone {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        base_channels: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the trend and seasonal guidance networks.
    TrainGuidance {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        backbone: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        trend_out: Option<PathBuf>,
        #[arg(long)]
        seasonal_out: Option<PathBuf>,
    },
    /// Sample new windows, with or without style guidance.
    Generate {
        #[arg(long)]
        backbone: PathBuf,
        #[arg(long)]
        trend: Option<PathBuf>,
        #[arg(long)]
        seasonal: Option<PathBuf>,
        /// Dataset the styles are drawn from.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, conflicts_with = "unguided")]
        guided: bool,
        #[arg(long)]
        unguided: bool,
        /// Use this library entry as the style of every sample.
        #[arg(long)]
        style_index: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the six similarity metrics.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write PCA coordinates of both sets for plotting.
    ExportPlots {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli.common, cli.command, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(1)
        }
    }
}
