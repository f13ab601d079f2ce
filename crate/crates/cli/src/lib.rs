//! Command-line surface, file formats and checkpoints for `jestlab-core`.
//!
//! Every subcommand is a plain function so tests can drive it without a
//! subprocess; [`execute`] dispatches a parsed [`Cli`].

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod pipeline;

use std::io::Write;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use jestlab_core::ensembling::{Lattice, VoteRule};
use jestlab_core::modeling::TaskId;
use jestlab_core::synthetic::SyntheticConfig;

pub use jestlab_core;

use crate::commands::{Combine, PredSpec};
use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "jestlab", version, about = "Humor and offense rating pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct RunFlags {
    /// Run configuration (TOML).
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl RunFlags {
    pub fn load(&self) -> Result<RunConfig> {
        RunConfig::load(
            &self.config,
            &Overrides {
                seed: self.seed,
                output_dir: self.output_dir.clone(),
                max_epochs: self.max_epochs,
                learning_rate: self.learning_rate,
                patience: self.patience,
                batch_size: self.batch_size,
            },
        )
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train per the run configuration and write checkpoints, predictions,
    /// history, chosen epochs and a manifest.
    Train(RunFlags),
    /// Retrain a fresh single-task model on train + dev for a fixed number
    /// of epochs.
    Retrain {
        #[command(flatten)]
        run: RunFlags,
        /// Defaults to the epoch chosen by `train` in the same output
        /// directory.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Predict one task for every row of an `id,text` CSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        task: TaskId,
        /// Clip regression outputs to [0, 5].
        #[arg(long)]
        clamp: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Combine id-aligned prediction files.
    #[command(group(ArgGroup::new("how").required(true).args(["weights", "uniform", "vote", "or_vote"])))]
    Ensemble {
        #[arg(long)]
        task: TaskId,
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// `model_id,lambda` CSV; ids are the input file stems.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        uniform: bool,
        /// Majority vote over binary predictions (ties go to 1).
        #[arg(long)]
        vote: bool,
        /// Positive if any model predicts positive.
        #[arg(long)]
        or_vote: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Search ensemble weights on a lattice against gold values.
    Gridsearch {
        #[arg(long)]
        task: TaskId,
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Labelled dataset CSV or `id,gold` CSV.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Search every coordinate independently instead of the simplex.
        #[arg(long = "box")]
        box_lattice: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Metric table for prediction files against a labelled dataset.
    Report {
        #[arg(long)]
        gold: PathBuf,
        /// `NAME:TASK:path`, repeatable.
        #[arg(long = "pred")]
        preds: Vec<PredSpec>,
        /// Emit CSV instead of the text table.
        #[arg(long)]
        csv: bool,
    },
    /// Mean offense rating of humorous texts by controversy label.
    Analyze {
        #[arg(long)]
        data: PathBuf,
    },
    /// Write a synthetic labelled dataset with known signal.
    Synth {
        #[arg(long, default_value_t = 200)]
        records: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        humor_fraction: f64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::runtime("io", format!("stdout: {e}")))
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(flags) => {
            let config = flags.load()?;
            let outcome = pipeline::cmd_train(&config)?;
            for (task, n) in &outcome.chosen_n {
                emit(out, &format!("{task} n={n}\n"))?;
            }
            emit(out, &format!("artifacts: {}\n", outcome.output_dir.display()))
        }
        Command::Retrain { run, epochs } => {
            let config = run.load()?;
            let outcome = pipeline::cmd_retrain(&config, epochs)?;
            emit(
                out,
                &format!(
                    "retrained {} epochs: {}\n",
                    outcome.epochs_run,
                    outcome.output_dir.display()
                ),
            )
        }
        Command::Predict {
            checkpoint,
            data: path,
            task,
            clamp,
            output,
        } => {
            let rows = commands::predict(&checkpoint, &path, task, clamp)?;
            data::write_file(&output, &data::predictions_csv(&rows))
        }
        Command::Ensemble {
            task,
            inputs,
            weights,
            uniform: _,
            vote,
            or_vote,
            output,
        } => {
            let combine = match (weights, vote, or_vote) {
                (Some(path), _, _) => Combine::Weights(path),
                (None, true, _) => Combine::Vote(VoteRule::Majority),
                (None, _, true) => Combine::Vote(VoteRule::Or),
                _ => Combine::Uniform,
            };
            let rows = commands::ensemble(task, &inputs, &combine)?;
            data::write_file(&output, &data::predictions_csv(&rows))
        }
        Command::Gridsearch {
            task,
            inputs,
            gold,
            step,
            box_lattice,
            output,
        } => {
            let lattice = if box_lattice { Lattice::Box } else { Lattice::Simplex };
            let g = commands::gridsearch(task, &inputs, &gold, step, lattice)?;
            data::write_file(&output, &data::weights_csv(&g.model_ids, &g.result.lambdas))?;
            emit(
                out,
                &format!(
                    "best_rmse={} candidates={}\n",
                    data::fmt_f64(g.result.rmse),
                    g.result.candidates
                ),
            )
        }
        Command::Report { gold, preds, csv } => {
            let report = commands::report(&gold, &preds)?;
            emit(
                out,
                &if csv {
                    report.render_csv()
                } else {
                    report.render_table()
                },
            )
        }
        Command::Analyze { data: path } => commands::analyze(&path, out),
        Command::Synth {
            records,
            seed,
            humor_fraction,
            output,
        } => {
            let config = SyntheticConfig {
                records,
                seed,
                humor_fraction,
                ..SyntheticConfig::default()
            };
            data::write_file(&output, &commands::synth(&config)?)
        }
    }
}
