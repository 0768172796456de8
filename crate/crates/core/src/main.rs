use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mi_onset::pipeline::{
    cmd_detect, cmd_evaluate, cmd_pipeline, cmd_preprocess, cmd_sweep, cmd_synth, cmd_train, cmd_tune,
    metric_rows, parse_config, sweep_to_csv, PipelineConfig,
};

/// Self-paced motor-imagery onset detection with LSTM encoder-decoder
/// predictors.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the synthesis and training seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Threads used for ED-bank training; all cores by default.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and test stream.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit PCA and the codebook on a corpus and write scale series.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the ED bank and write a model bundle without a threshold.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate the similarity threshold into a bundle.
    Tune {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Label the preprocessed test stream.
    Detect {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a decisions file against the corpus stream markers.
    Evaluate {
        /// Corpus directory holding the stream.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage on synthetic data.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the n_h × ℓ_o grid from the sweep section.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let cfg = match &common.config {
        Some(path) => parse_config(path)?,
        None => PipelineConfig::default(),
    };
    let cfg = cfg.with_seed(common.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { common, out } => {
            let cfg = load_config(&common)?;
            cmd_synth(&cfg, &out).context("synth")?;
        }
        Command::Preprocess { common, input, out } => {
            let cfg = load_config(&common)?;
            cmd_preprocess(&cfg, &input, &out).context("preprocess")?;
        }
        Command::Train { common, input, out } => {
            let cfg = load_config(&common)?;
            cmd_train(&cfg, &input, &out, common.workers).context("train")?;
        }
        Command::Tune {
            input,
            bundle,
            workers,
        } => {
            let th = cmd_tune(&input, &bundle, workers).context("tune")?;
            println!("S_th = {th:.6}");
        }
        Command::Detect { input, bundle, out } => {
            let d = cmd_detect(&input, &bundle, &out).context("detect")?;
            println!("{} decisions", d.len());
        }
        Command::Evaluate {
            input,
            bundle,
            decisions,
            out,
        } => {
            let (raw, corrected) = cmd_evaluate(&input, &bundle, &decisions, &out).context("evaluate")?;
            print!("{}", metric_rows(&raw, &corrected));
        }
        Command::Pipeline { common, out } => {
            let cfg = load_config(&common)?;
            let (raw, corrected) = cmd_pipeline(&cfg, &out, common.workers).context("pipeline")?;
            print!("{}", metric_rows(&raw, &corrected));
        }
        Command::Sweep { common, out } => {
            let cfg = load_config(&common)?;
            let rows = cmd_sweep(&cfg, &out, common.workers).context("sweep")?;
            print!("{}", sweep_to_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
