//! `procgan`: ingest event logs, train generators, sample, evaluate and draw
//! workflow diagrams.
//!
//! Exit codes: 0 success, 2 usage, parse or I/O error, 3 numeric failure
//! during training.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use procgan::training::TrainError;
use procgan::ModelKind;

use commands::LogFormat;
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "procgan", version, about = "Synthetic process-trace generation and evaluation")]
struct Cli {
    /// JSON run configuration; unknown keys are rejected, missing keys take their defaults.
    #[arg(long, global = true, env = "PROCGAN_CONFIG")]
    config: Option<PathBuf>,
    /// Run seed, applied to every stage [default: the config's `seed`, else 0].
    #[arg(long, global = true, env = "PROCGAN_SEED")]
    seed: Option<u64>,
    /// Log more to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

fn parse_support(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn parse_min_freq(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be a non-negative number"))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse an event log, split it 0.8/0.1/0.1 and write an encoded dataset directory.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Input format [default: from the file extension, CSV unless `.xes`].
        #[arg(long, value_enum)]
        format: Option<LogFormat>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on a dataset directory.
    Train {
        /// pgan, pgan-m, pgan-k, trans-nar, trans-ar, gru or lstm.
        #[arg(long)]
        model: ModelKind,
        /// Dataset directory written by `ingest`.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path; the log goes to `<stem>.log.jsonl` beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample synthetic traces from a checkpoint into a CSV (plus a `.meta.json` sidecar).
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of traces [default: `generate.count` in the config, 500].
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare synthetic traces with authentic ones and write a JSON report.
    Evaluate {
        #[arg(long)]
        authentic: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        /// Scorer bundle from `scorer-train`; enables the FPR measure.
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the authentic-vs-perturbed classifier used for FPR.
    ScorerTrain {
        /// Dataset directory written by `ingest`.
        #[arg(long)]
        data: PathBuf,
        /// Output bundle (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Align traces and draw the workflow as Graphviz DOT (plus a JSON summary).
    Discover {
        /// Trace CSV or XES file.
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Consensus support threshold in (0, 1] [default: 0.5].
        #[arg(long, value_parser = parse_support)]
        support: Option<f64>,
        /// Minimum side-branch frequency as a fraction of traces [default: 0.05].
        #[arg(long = "min-freq", value_parser = parse_min_freq)]
        min_freq: Option<f64>,
    },
    /// Concatenate trace files, re-keying case ids as `part<i>_<id>`.
    Concat {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a toy process into a trace CSV.
    Simulate {
        /// Process description (JSON) [default: the built-in six-step clinical process].
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// ingest -> train -> generate -> evaluate -> discover into one directory, with a manifest.
    RunAll {
        #[arg(long)]
        input: PathBuf,
        /// Input format [default: from the file extension].
        #[arg(long, value_enum)]
        format: Option<LogFormat>,
        /// Model to train.
        #[arg(long, default_value = "pgan-k")]
        model: ModelKind,
        /// Also train a scorer and report FPR.
        #[arg(long)]
        scorer: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?.with_seed(cli.seed);
    match cli.command {
        Command::Ingest { input, format, out } => {
            let format = format.unwrap_or_else(|| LogFormat::infer(&input));
            commands::ingest(&input, format, &out, &cfg)?;
        }
        Command::Train { model, data, out } => {
            commands::train(&data, model, &out, &cfg)?;
        }
        Command::Generate { checkpoint, count, out } => {
            let count = count.map_or(cfg.generate.count, |c| c as usize);
            commands::generate(&checkpoint, count, &out, &cfg)?;
        }
        Command::Evaluate {
            authentic,
            synthetic,
            scorer,
            out,
        } => {
            commands::evaluate(&authentic, &synthetic, scorer.as_deref(), &out)?;
        }
        Command::ScorerTrain { data, out } => {
            commands::scorer_train(&data, &out, &cfg)?;
        }
        Command::Discover {
            log,
            out,
            support,
            min_freq,
        } => {
            let mut discovery = cfg.discovery.clone();
            discovery.support_threshold = support.unwrap_or(discovery.support_threshold);
            discovery.min_frequency = min_freq.unwrap_or(discovery.min_frequency);
            commands::discover_workflow(&log, &out, &discovery)?;
        }
        Command::Concat { inputs, out } => {
            commands::concat(&inputs, &out)?;
        }
        Command::Simulate { spec, count, out } => {
            commands::simulate_log(spec.as_deref(), count as usize, &out, &cfg)?;
        }
        Command::RunAll {
            input,
            format,
            model,
            scorer,
            out,
        } => {
            let format = format.unwrap_or_else(|| LogFormat::infer(&input));
            commands::run_all(&input, format, model, scorer, &out, &cfg)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<TrainError>() {
        Some(TrainError::NonFinite { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
