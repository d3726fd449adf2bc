use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use windarb_cli::commands::{self, ArbitrateMode};
use windarb_cli::config::{build_settings, Settings};
use windarb_cli::exit_code;
use windarb_core::arbitration::ArbitrationKind;
use windarb_core::error::{Error, Result};

/// Windowed two-stage abnormality classification on synthetic recordings:
/// dataset generation, per-window scoring, score arbitration and seeded
/// evaluation protocols.
#[derive(Parser)]
#[command(name = "windarb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources shared by every subcommand.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set windowing.window_len_s=600`.
    /// May be repeated; later overrides win.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn settings(&self) -> Result<Settings> {
        build_settings(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (train/ and test/ splits).
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the first-stage window scorer on a dataset's train split.
    TrainFirst {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset directory produced by `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Window length in seconds.
        #[arg(long, default_value_t = 60.0)]
        window_len: f64,
        /// Where to save the trained first-stage model.
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Score one dataset split with a trained first-stage model.
    Score {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// First-stage model file from `train-first`.
        #[arg(long)]
        model: PathBuf,
        /// Window length in seconds.
        #[arg(long, default_value_t = 60.0)]
        window_len: f64,
        /// Which split to score.
        #[arg(long, default_value = "test", value_parser = ["train", "test"])]
        split: String,
        /// Output score CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn per-window scores into per-recording decisions.
    Arbitrate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Score CSV to arbitrate (typically the test split).
        #[arg(long)]
        scores: PathBuf,
        /// Arbitration method.
        #[arg(long, value_parser = ["mean", "threshold", "raw", "histogram", "hybrid"])]
        method: String,
        /// Training score CSV (required for raw/histogram/hybrid unless
        /// --model-in is given).
        #[arg(long)]
        train_scores: Option<PathBuf>,
        /// Load a previously trained arbitration model instead of training.
        #[arg(long, conflicts_with = "train_scores")]
        model_in: Option<PathBuf>,
        /// Save the trained arbitration model.
        #[arg(long)]
        model_out: Option<PathBuf>,
        /// Write per-recording decisions to this CSV.
        #[arg(long)]
        decisions_out: Option<PathBuf>,
    },
    /// Run the full seeded experiment grid and write the results CSV.
    Protocol {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output results CSV.
        #[arg(long)]
        out: PathBuf,
        /// Also write per-cell aggregate statistics.
        #[arg(long)]
        summary_out: Option<PathBuf>,
    },
    /// Measure label-noise rates across window lengths on synthetic data.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output sweep CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out } => commands::generate(&config.settings()?, &out),
        Command::TrainFirst {
            config,
            data,
            window_len,
            model_out,
        } => commands::train_first(&config.settings()?, &data, window_len, &model_out),
        Command::Score {
            config,
            data,
            model,
            window_len,
            split,
            out,
        } => commands::score(&config.settings()?, &data, &model, window_len, &split, &out),
        Command::Arbitrate {
            config,
            scores,
            method,
            train_scores,
            model_in,
            model_out,
            decisions_out,
        } => {
            let settings = config.settings()?;
            let mode = match (method.as_str(), train_scores, model_in) {
                ("mean", None, None) => ArbitrateMode::Mean,
                ("threshold", None, None) => ArbitrateMode::Threshold,
                ("mean" | "threshold", _, _) => {
                    return Err(Error::Config(format!(
                        "method `{method}` takes neither --train-scores nor --model-in"
                    )))
                }
                (_, _, Some(model)) => ArbitrateMode::Load { model },
                (kind, Some(scores), None) => ArbitrateMode::Train {
                    kind: kind.parse::<ArbitrationKind>()?,
                    scores,
                },
                (kind, None, None) => {
                    return Err(Error::Config(format!(
                        "method `{kind}` needs --train-scores or --model-in"
                    )))
                }
            };
            commands::arbitrate_cmd(
                &settings,
                &scores,
                mode,
                model_out.as_deref(),
                decisions_out.as_deref(),
            )
        }
        Command::Protocol {
            config,
            out,
            summary_out,
        } => commands::protocol(&config.settings()?, &out, summary_out.as_deref()),
        Command::Sweep { config, out } => commands::sweep(&config.settings()?, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not failures
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
