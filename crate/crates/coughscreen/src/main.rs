//! Operator CLI: wires the library's workflows to subcommands.
//!
//! Exit codes: 0 success, 1 runtime/data error, 2 usage or config error.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use coughscreen::config::{PipelineConfig, ServiceConfig};
use coughscreen::ingest::{serve, ServeError};
use coughscreen::pipeline::{
    run_evaluate, run_export, run_predict, run_synth, run_train_source, Pool,
};

#[derive(Parser)]
#[command(name = "coughscreen", version, about = "Cough-based COVID-19 pre-screening toolkit")]
struct Cli {
    /// Key=value config file (pipeline or service keys per subcommand).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Chattier logging.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic digit and cough corpora with labels.csv files.
    Synth {
        /// Samples per class (digits: per digit; coughs: per label).
        #[arg(long)]
        n_per_class: Option<usize>,
    },
    /// Train the spoken-digit source network; writes checkpoint + log CSV.
    TrainSource {
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Cross-validate the four transfer classifiers and emit report + PCA scatter.
    Evaluate {
        /// Override the number of subject-stratified folds.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Screen one WAV clip with a trained checkpoint and classifier.
    Predict {
        /// Classifier file written by `evaluate`.
        #[arg(long)]
        classifier: PathBuf,
        /// How per-segment scores pool into the clip decision.
        #[arg(long, default_value = "mean", value_parser = ["mean", "max"])]
        pool: String,
        /// WAV file to screen.
        wav: PathBuf,
    },
    /// Run the sample collection HTTP service until interrupted.
    Serve,
    /// Write the deterministic daily export bundle from the service store.
    Export {
        /// UTC day to export, YYYY-MM-DD.
        date: String,
        /// Output tar path (default: sigma-export-DATE.tar).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

type Failure = (u8, String);

fn usage(message: impl Into<String>) -> Failure {
    (2, message.into())
}

fn pipeline_failure(e: coughscreen::pipeline::PipelineError) -> Failure {
    (e.exit_code() as u8, e.to_string())
}

fn pipeline_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::from_file(path).map_err(|e| usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.rng_seed = seed;
    }
    Ok(config)
}

fn service_config(cli: &Cli) -> Result<ServiceConfig, Failure> {
    match &cli.config {
        Some(path) => ServiceConfig::from_file(path).map_err(|e| usage(e.to_string())),
        None => Ok(ServiceConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Synth { n_per_class } => {
            let mut config = pipeline_config(&cli)?;
            if let Some(n) = n_per_class {
                config.n_per_class = *n;
            }
            let out = run_synth(&config).map_err(pipeline_failure)?;
            println!(
                "wrote {} digit clips to {} and {} cough clips to {}",
                out.n_digit_wavs,
                out.digits_dir.display(),
                out.n_cough_wavs,
                out.coughs_dir.display()
            );
            Ok(())
        }
        Command::TrainSource { epochs } => {
            let mut config = pipeline_config(&cli)?;
            if let Some(epochs) = epochs {
                config.train.epochs = *epochs;
            }
            let out = run_train_source(&config).map_err(pipeline_failure)?;
            let last = out.stats.last().expect("log always has rows");
            println!(
                "trained {} epochs: loss {:.6}, accuracy {:.4}",
                last.epoch, last.loss, last.accuracy
            );
            println!("checkpoint: {}", out.checkpoint.display());
            println!("log: {}", out.log_path.display());
            Ok(())
        }
        Command::Evaluate { folds } => {
            let mut config = pipeline_config(&cli)?;
            if let Some(folds) = folds {
                config.folds = *folds;
            }
            let out = run_evaluate(&config).map_err(pipeline_failure)?;
            for summary in &out.report.summaries {
                println!(
                    "{}: accuracy {:.4} ± {:.4}, sensitivity {:.4}, specificity {:.4}",
                    summary.classifier,
                    summary.mean_accuracy,
                    summary.std_accuracy,
                    summary.mean_sensitivity,
                    summary.mean_specificity
                );
            }
            println!("report: {}", out.report_csv.display());
            println!("scatter: {}", out.scatter_svg.display());
            Ok(())
        }
        Command::Predict { classifier, pool, wav } => {
            let config = pipeline_config(&cli)?;
            let pool: Pool = pool.parse().map_err(usage)?;
            let prediction =
                run_predict(&config, classifier, wav, pool).map_err(pipeline_failure)?;
            for (i, score) in prediction.segment_scores.iter().enumerate() {
                println!("segment {i}: {score:.6}");
            }
            println!(
                "clip: {} {:.6} pool={}",
                prediction.label.as_str(),
                prediction.pooled_score,
                prediction.pool
            );
            Ok(())
        }
        Command::Serve => {
            let config = service_config(&cli)?;
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| (1u8, format!("cannot start async runtime: {e}")))?;
            runtime.block_on(serve(&config)).map_err(|e| {
                let code = match &e {
                    ServeError::Config(_) => 2u8,
                    _ => 1u8,
                };
                (code, e.to_string())
            })
        }
        Command::Export { date, out } => {
            let config = service_config(&cli)?;
            let day = NaiveDate::parse_from_str(date, "%Y-%m-%d")
                .map_err(|_| usage(format!("bad date {date:?} (expected YYYY-MM-DD)")))?;
            let out_path =
                out.clone().unwrap_or_else(|| PathBuf::from(format!("sigma-export-{day}.tar")));
            let regions = config.load_regions().map_err(|e| usage(e.to_string()))?;
            let manifest = run_export(&config.storage_root, regions, day, &out_path)
                .map_err(pipeline_failure)?;
            if manifest.empty {
                println!("warning: no samples stored for {day}; wrote an empty bundle");
            }
            println!(
                "wrote {} ({} samples, digest {})",
                out_path.display(),
                manifest.entries.len(),
                manifest.manifest_digest
            );
            Ok(())
        }
    }
}
