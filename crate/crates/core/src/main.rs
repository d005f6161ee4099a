use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diffseg::config::ExperimentConfig;
use diffseg::experiment::{cmd_eval, cmd_generate, cmd_plot, cmd_sweep, cmd_train, summary_table, EvalSource, SweepPlan};
use diffseg::Result;

/// Diffusion-based temporal action segmentation on synthetic videos.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Generate {
        /// Experiment file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override data.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; writes model.ckpt, train.log and config.toml.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory; falls back to data_dir in the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override train.epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate on the test split; writes metrics.csv, baselines.csv, predictions/ and plots/.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override eval.steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Override eval.mask (N, P, B or R).
        #[arg(long)]
        mask: Option<String>,
        /// Dump argmax labels after every reverse step.
        #[arg(long)]
        trajectory: bool,
        /// Predict the ground truth instead of running a model.
        #[arg(long)]
        oracle: bool,
    },
    /// Draw label files as stacked barcodes.
    Plot {
        /// Label files, one class name per line; drawn top to bottom.
        #[arg(required = true)]
        labels: Vec<PathBuf>,
        /// Dataset mapping file ("index name" per line).
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate ablation variants, one subdirectory each.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training mask sets, e.g. N,NP,NPB,NPBR.
        #[arg(long, value_delimiter = ',')]
        masks: Vec<String>,
        /// Inference step counts, e.g. 1,8,25.
        #[arg(long, value_delimiter = ',')]
        steps: Vec<usize>,
        /// Inference masks, e.g. N,P,B,R.
        #[arg(long, value_delimiter = ',')]
        infer_masks: Vec<String>,
    },
}

fn load(config: Option<&Path>) -> Result<ExperimentConfig> {
    match config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn data_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.data_dir.clone())
        .ok_or_else(|| diffseg::Error::Config("no dataset directory: pass --data or set data_dir".into()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let mut cfg = load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.data.seed = s;
            }
            let ds = cmd_generate(&cfg, &out)?;
            println!("wrote {} videos to {}", ds.videos.len(), out.display());
        }
        Command::Train { config, data, out, resume, epochs } => {
            let mut cfg = load(config.as_deref())?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let data = data_dir(data, &cfg)?;
            let outcome = cmd_train(&cfg, &data, &out, resume.as_deref())?;
            if let Some(last) = outcome.log.last() {
                println!("{}", last.to_line());
            }
            println!("wrote {}", out.join("model.ckpt").display());
        }
        Command::Eval { config, checkpoint, data, out, steps, mask, trajectory, oracle } => {
            let mut cfg = load(config.as_deref())?;
            if let Some(n) = steps {
                cfg.eval.steps = n;
            }
            if let Some(m) = mask {
                cfg.eval.mask = m;
            }
            cfg.eval.keep_trajectory |= trajectory;
            let data = data_dir(data, &cfg)?;
            let source = match (&checkpoint, oracle) {
                (_, true) => EvalSource::Oracle,
                (Some(path), false) => EvalSource::Checkpoint(path),
                (None, false) => unreachable!("clap requires --checkpoint without --oracle"),
            };
            let result = cmd_eval(&cfg, source, &data, &out)?;
            println!("{}", result.report);
        }
        Command::Plot { labels, mapping, out } => {
            cmd_plot(&labels, &mapping, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Sweep { config, data, out, masks, steps, infer_masks } => {
            let cfg = load(config.as_deref())?;
            let data = data_dir(data, &cfg)?;
            let plan = SweepPlan {
                train_masks: masks,
                steps,
                infer_masks,
            };
            let rows = cmd_sweep(&cfg, &plan, &data, &out)?;
            print!("{}", summary_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
